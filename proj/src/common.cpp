#include "pod4d/common.hpp"

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <thread>

#include "pod4d/box.hpp"

namespace pod4d {

const char* class_name(ObjectClass c) {
  switch (c) {
    case ObjectClass::kCar:
      return "car";
    case ObjectClass::kPedestrian:
      return "pedestrian";
    case ObjectClass::kCyclist:
      return "cyclist";
    case ObjectClass::kVan:
      return "van";
    case ObjectClass::kTrafficCone:
      return "traffic_cone";
  }
  return "unknown";
}

ObjectClass class_from_name(const std::string& name) {
  for (int c = 0; c < kNumClasses; ++c) {
    if (name == class_name(static_cast<ObjectClass>(c))) return static_cast<ObjectClass>(c);
  }
  fail(ErrorCode::kParse, "unknown object class '" + name + "'");
}

double wrap_angle(double a) {
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  a = std::fmod(a, kTwoPi);
  if (a <= -std::numbers::pi) a += kTwoPi;
  if (a > std::numbers::pi) a -= kTwoPi;
  return a;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int resolve_workers(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("POD4D_WORKERS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

Vec3 Pose::apply(const Vec3& p) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  return {x + c * p.x() - s * p.y(), y + s * p.x() + c * p.y(), z + p.z()};
}

Vec3 Pose::apply_inverse(const Vec3& p) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double dx = p.x() - x, dy = p.y() - y;
  return {c * dx + s * dy, -s * dx + c * dy, p.z() - z};
}

const char* time_tag_name(TimeTag t) { return t == TimeTag::kCurrent ? "current" : "future"; }

TimeTag time_tag_from_name(const std::string& name) {
  if (name == "current") return TimeTag::kCurrent;
  if (name == "future") return TimeTag::kFuture;
  fail(ErrorCode::kParse, "unknown time tag '" + name + "'");
}

bool DetectionBox::contains(const Vec3& p, double inflate) const {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double dx = p.x() - center.x(), dy = p.y() - center.y();
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  const double lz = p.z() - center.z();
  return std::abs(lx) <= dims.x() / 2 + inflate && std::abs(ly) <= dims.y() / 2 + inflate &&
         std::abs(lz) <= dims.z() / 2 + inflate;
}

}  // namespace pod4d
