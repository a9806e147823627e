#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace pod4d {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

// Error categories. The numeric values are shared with the C API status codes.
enum class ErrorCode : int {
  kInvalidArgument = 1,
  kIo = 2,
  kParse = 3,
  kShapeMismatch = 4,
  kConfig = 5,
  kPlacement = 6,
  kInternal = 99,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

inline void require(bool cond, ErrorCode code, const std::string& msg) {
  if (!cond) fail(code, msg);
}

// Object categories shared by the simulator, decoder and evaluator.
enum class ObjectClass : int { kCar = 0, kPedestrian = 1, kCyclist = 2, kVan = 3, kTrafficCone = 4 };
inline constexpr int kNumClasses = 5;

const char* class_name(ObjectClass c);
ObjectClass class_from_name(const std::string& name);

// Wraps an angle to (-pi, pi].
double wrap_angle(double a);

// SplitMix64 step; used to derive independent seeds from (seed, stream) pairs.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Number of worker threads: explicit value if > 0, else POD4D_WORKERS, else hardware concurrency.
int resolve_workers(int requested);

}  // namespace pod4d
