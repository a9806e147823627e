#include "pod4d/preprocess.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>
#include <random>

#include "pod4d/io.hpp"

namespace pod4d::preprocess {

namespace {

struct Plane {
  Vec3 normal;
  double offset;
};

std::optional<Plane> plane_through(const Vec3& a, const Vec3& b, const Vec3& c) {
  Vec3 n = (b - a).cross(c - a);
  const double len = n.norm();
  if (len < 1e-9) return std::nullopt;
  n /= len;
  if (n.z() < 0.0) n = -n;
  return Plane{n, -n.dot(a)};
}

std::optional<Plane> fit_plane_least_squares(const std::vector<Vec3>& pts) {
  if (pts.size() < 3) return std::nullopt;
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Vec3& p : pts) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  Vec3 n = solver.eigenvectors().col(0);  // smallest eigenvalue
  if (n.z() < 0.0) n = -n;
  return Plane{n, -n.dot(mean)};
}

}  // namespace

GroundResult extract_ground(const sim::PointCloudFrame& frame, const GroundParams& params) {
  GroundResult result;
  const std::size_t n = frame.points.size();
  result.mask.assign(n, 0);

  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(frame.points[i].z - params.ground_z_estimate) <= params.height_gate) candidates.push_back(i);
  }
  if (candidates.size() < 3 || candidates.size() < static_cast<std::size_t>(params.min_inliers)) return result;

  const double min_nz = std::cos(params.max_tilt_deg * std::numbers::pi / 180.0);
  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);

  std::optional<Plane> best;
  std::size_t best_count = 0;
  for (int it = 0; it < params.iterations; ++it) {
    const std::size_t a = candidates[pick(rng)], b = candidates[pick(rng)], c = candidates[pick(rng)];
    if (a == b || b == c || a == c) continue;
    const auto plane =
        plane_through(frame.points[a].position(), frame.points[b].position(), frame.points[c].position());
    if (!plane || plane->normal.z() < min_nz) continue;
    std::size_t count = 0;
    for (std::size_t idx : candidates) {
      if (std::abs(plane->normal.dot(frame.points[idx].position()) + plane->offset) <= params.inlier_tolerance) {
        ++count;
      }
    }
    if (count > best_count) {
      best_count = count;
      best = plane;
    }
  }
  if (!best) return result;

  std::vector<Vec3> inliers;
  inliers.reserve(best_count);
  for (std::size_t idx : candidates) {
    const Vec3 p = frame.points[idx].position();
    if (std::abs(best->normal.dot(p) + best->offset) <= params.inlier_tolerance) inliers.push_back(p);
  }
  Plane plane = *best;
  if (auto refined = fit_plane_least_squares(inliers); refined && refined->normal.z() >= min_nz) plane = *refined;

  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(plane.normal.dot(frame.points[i].position()) + plane.offset) <= params.inlier_tolerance) {
      result.mask[i] = 1;
      ++result.inliers;
    }
  }
  result.normal = plane.normal;
  result.offset = plane.offset;
  result.sufficient = result.inliers >= static_cast<std::size_t>(params.min_inliers);
  return result;
}

CompensationResult compensate_velocity(const sim::PointCloudFrame& frame, std::span<const std::uint8_t> ground_mask,
                                       VelocityMethod method, std::optional<Vec3> ego_velocity) {
  const std::size_t n = frame.points.size();
  require(ground_mask.empty() || ground_mask.size() == n, ErrorCode::kShapeMismatch,
          "ground mask length does not match point count");
  CompensationResult out;
  out.points.resize(n);

  std::size_t ground_count = 0;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = frame.points[i];
    const bool ground = !ground_mask.empty() && ground_mask[i] != 0;
    out.points[i] = {p.position(), p.intensity, p.v, p.v, ground};
    if (ground) {
      sum += p.v;
      ++ground_count;
    }
  }

  if (method == VelocityMethod::kGroundMean) {
    if (ground_count == 0) {
      out.degraded = true;
      return out;
    }
    out.ground_mean_v = sum / static_cast<double>(ground_count);
    for (auto& p : out.points) p.v_abs = p.v_rel - out.ground_mean_v;
    return out;
  }

  // Per-ray: static points satisfy v_rel = -ego . d.
  Vec3 ego = Vec3::Zero();
  if (ego_velocity) {
    ego = *ego_velocity;
  } else if (ground_count >= 3) {
    Eigen::Matrix3d ata = Eigen::Matrix3d::Zero();
    Vec3 atb = Vec3::Zero();
    for (const auto& p : out.points) {
      if (!p.is_ground) continue;
      const Vec3 d = (p.position - frame.sensor_origin).normalized();
      ata += d * d.transpose();
      atb -= d * p.v_rel;
    }
    // Ground returns constrain the vertical component poorly; a small ridge keeps the solve stable.
    ata += 1e-6 * Eigen::Matrix3d::Identity();
    ego = ata.ldlt().solve(atb);
  } else {
    out.degraded = true;
    return out;
  }
  out.ego_velocity = ego;
  for (auto& p : out.points) {
    const Vec3 ray = p.position - frame.sensor_origin;
    const double len = ray.norm();
    if (len < kMinRayLength) continue;
    p.v_abs = p.v_rel + ego.dot(ray / len);
  }
  return out;
}

Vec3 extrapolate_along_ray(const Vec3& x, const Vec3& origin, double v_abs, double delta_t) {
  const Vec3 ray = x - origin;
  return x + (v_abs * delta_t / ray.norm()) * ray;
}

TwoFramePoints generate_virtual_future(std::span<const CompensatedPoint> points, double delta_t,
                                       const Vec3& sensor_origin) {
  require(delta_t > 0.0, ErrorCode::kInvalidArgument, "delta_t must be > 0");
  TwoFramePoints tf;
  tf.delta_t = delta_t;
  tf.sensor_origin = sensor_origin;

  std::vector<std::size_t> kept;
  kept.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    if ((points[i].position - sensor_origin).norm() < kMinRayLength) {
      ++tf.dropped;
    } else {
      kept.push_back(i);
    }
  }
  const auto m = static_cast<std::int32_t>(kept.size());
  tf.records.resize(2 * kept.size());
  for (std::int32_t k = 0; k < m; ++k) {
    const CompensatedPoint& p = points[kept[static_cast<std::size_t>(k)]];
    TimedPoint& cur = tf.records[static_cast<std::size_t>(k)];
    cur = {p.position, p.intensity, p.v_rel, p.v_abs, 0, p.is_ground, m + k};
    TimedPoint& fut = tf.records[static_cast<std::size_t>(m + k)];
    fut = cur;
    fut.t_label = 1;
    fut.twin = k;
    // Zero velocity leaves the point bit-identical.
    if (p.v_abs != 0.0) fut.position = extrapolate_along_ray(p.position, sensor_origin, p.v_abs, delta_t);
  }
  return tf;
}

void write_two_frame(const TwoFramePoints& tf, const std::filesystem::path& bin_path, double ground_mean_v,
                     bool degraded) {
  std::vector<float> blob;
  blob.reserve(tf.records.size() * 7);
  for (const auto& r : tf.records) {
    blob.insert(blob.end(), {static_cast<float>(r.position.x()), static_cast<float>(r.position.y()),
                             static_cast<float>(r.position.z()), static_cast<float>(r.intensity),
                             static_cast<float>(r.v_abs), static_cast<float>(r.t_label), 0.0f});
  }
  io::write_f32(bin_path, blob);
  const io::json meta{
      {"delta_t", tf.delta_t}, {"ground_mean_v", ground_mean_v},
      {"degraded", degraded},  {"records", tf.records.size()},
      {"dropped", tf.dropped}, {"sensor_origin", {tf.sensor_origin.x(), tf.sensor_origin.y(), tf.sensor_origin.z()}}};
  io::write_text_atomic(io::sidecar_path(bin_path), meta.dump(2) + "\n");
}

}  // namespace pod4d::preprocess
