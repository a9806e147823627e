#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "pod4d/common.hpp"
#include "pod4d/sim.hpp"

namespace pod4d::preprocess {

struct GroundParams {
  double ground_z_estimate = -1.8;
  double height_gate = 0.3;  // candidates: |z - estimate| <= gate
  double inlier_tolerance = 0.15;
  double max_tilt_deg = 15.0;  // plane normals further from vertical are rejected
  int min_inliers = 50;
  int iterations = 100;
  std::uint64_t seed = 0x5eed;
};

struct GroundResult {
  std::vector<std::uint8_t> mask;  // 1 = ground
  bool sufficient = false;         // false: insufficient ground evidence
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;  // plane: normal . p + offset = 0
  std::size_t inliers = 0;
};

GroundResult extract_ground(const sim::PointCloudFrame& frame, const GroundParams& params);

enum class VelocityMethod { kGroundMean, kPerRay };

struct CompensatedPoint {
  Vec3 position = Vec3::Zero();
  double intensity = 0.0;
  double v_rel = 0.0;
  double v_abs = 0.0;
  bool is_ground = false;
};

struct CompensationResult {
  std::vector<CompensatedPoint> points;
  double ground_mean_v = 0.0;        // kGroundMean: subtracted from every point
  Vec3 ego_velocity = Vec3::Zero();  // kPerRay: estimate used
  bool degraded = false;             // no usable ground; zero compensation applied
};

// Default: v_abs = v_rel - mean(v_rel over ground). kPerRay instead uses
// v_abs = v_rel + ego . d, with ego from `ego_velocity` or a least-squares fit on ground points.
CompensationResult compensate_velocity(const sim::PointCloudFrame& frame, std::span<const std::uint8_t> ground_mask,
                                       VelocityMethod method = VelocityMethod::kGroundMean,
                                       std::optional<Vec3> ego_velocity = std::nullopt);

struct TimedPoint {
  Vec3 position = Vec3::Zero();
  double intensity = 0.0;
  double v_rel = 0.0;
  double v_abs = 0.0;
  int t_label = 0;
  bool is_ground = false;
  std::int32_t twin = -1;  // index of the record in the other time slice
};

// Current records (t_label 0) come first in input order, followed by their
// virtual twins (t_label 1) in the same order.
struct TwoFramePoints {
  std::vector<TimedPoint> records;
  double delta_t = 0.0;
  Vec3 sensor_origin = Vec3::Zero();
  std::size_t dropped = 0;  // inputs coincident with the sensor origin

  std::size_t size_per_frame() const { return records.size() / 2; }
};

inline constexpr double kMinRayLength = 1e-9;

// x_dt = x + v_abs * dt * (x - o) / |x - o|.
Vec3 extrapolate_along_ray(const Vec3& x, const Vec3& origin, double v_abs, double delta_t);

TwoFramePoints generate_virtual_future(std::span<const CompensatedPoint> points, double delta_t,
                                       const Vec3& sensor_origin);

// Binary float32 N x 7 (x, y, z, i, v_abs, t_label, pad) plus a JSON sidecar.
void write_two_frame(const TwoFramePoints& tf, const std::filesystem::path& bin_path, double ground_mean_v,
                     bool degraded);

}  // namespace pod4d::preprocess
