#include "pod4d/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace pod4d::sim {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double base_intensity(int source, const Scene& scene) {
  if (source == kGroundSource) return 0.25;
  switch (scene.actors[static_cast<std::size_t>(source)].cls) {
    case ObjectClass::kCar:
      return 0.55;
    case ObjectClass::kVan:
      return 0.6;
    case ObjectClass::kPedestrian:
      return 0.4;
    case ObjectClass::kCyclist:
      return 0.45;
    case ObjectClass::kTrafficCone:
      return 0.95;
  }
  return 0.5;
}

// Oriented rectangle overlap by separating axes.
bool footprints_overlap(const Pose& a, const Vec2& half_a, const Pose& b, const Vec2& half_b) {
  const Vec2 axes[4] = {{std::cos(a.yaw), std::sin(a.yaw)},
                        {-std::sin(a.yaw), std::cos(a.yaw)},
                        {std::cos(b.yaw), std::sin(b.yaw)},
                        {-std::sin(b.yaw), std::cos(b.yaw)}};
  const Vec2 d{b.x - a.x, b.y - a.y};
  for (const Vec2& n : axes) {
    const double ra = half_a.x() * std::abs(n.dot(axes[0])) + half_a.y() * std::abs(n.dot(axes[1]));
    const double rb = half_b.x() * std::abs(n.dot(axes[2])) + half_b.y() * std::abs(n.dot(axes[3]));
    if (std::abs(n.dot(d)) > ra + rb) return false;
  }
  return true;
}

struct BoxAtTime {
  Vec3 center;
  double cos_yaw;
  double sin_yaw;
  Vec3 half;
  Vec2 velocity;
  double yaw_rate;
};

// Slab test in the box frame. Returns the entry distance along the ray and the
// local axis of the entered face, or +inf when the ray misses.
double intersect_box(const BoxAtTime& box, const Vec3& origin, const Vec3& dir, int* face_axis) {
  const Vec3 rel = origin - box.center;
  const Vec3 o{box.cos_yaw * rel.x() + box.sin_yaw * rel.y(), -box.sin_yaw * rel.x() + box.cos_yaw * rel.y(), rel.z()};
  const Vec3 d{box.cos_yaw * dir.x() + box.sin_yaw * dir.y(), -box.sin_yaw * dir.x() + box.cos_yaw * dir.y(), dir.z()};
  double t_near = -std::numeric_limits<double>::infinity();
  double t_far = std::numeric_limits<double>::infinity();
  int axis = 0;
  for (int k = 0; k < 3; ++k) {
    if (std::abs(d[k]) < 1e-15) {
      if (std::abs(o[k]) > box.half[k]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t1 = (-box.half[k] - o[k]) / d[k];
    double t2 = (box.half[k] - o[k]) / d[k];
    if (t1 > t2) std::swap(t1, t2);
    if (t1 > t_near) {
      t_near = t1;
      axis = k;
    }
    t_far = std::min(t_far, t2);
    if (t_near > t_far) return std::numeric_limits<double>::infinity();
  }
  if (t_far <= 0.0) return std::numeric_limits<double>::infinity();
  // Sensor inside a box: ignore it rather than report a hit at distance zero.
  if (t_near <= 0.0) return std::numeric_limits<double>::infinity();
  *face_axis = axis;
  return t_near;
}

}  // namespace

void LidarModel::validate() const {
  require(channels >= 1, ErrorCode::kConfig, "lidar.channels must be >= 1");
  require(fov_h_deg > 0.0 && fov_h_deg <= 360.0, ErrorCode::kConfig, "lidar.fov_h must be in (0, 360]");
  require(fov_v_deg >= 0.0 && fov_v_deg < 180.0, ErrorCode::kConfig, "lidar.fov_v must be in [0, 180)");
  require(angular_resolution_deg > 0.0, ErrorCode::kConfig, "lidar.angular_resolution must be > 0");
  require(max_range > 0.0, ErrorCode::kConfig, "lidar.max_range must be > 0");
  require(rate_hz > 0.0, ErrorCode::kConfig, "lidar.rate must be > 0");
  require(noise_sigma_range >= 0.0 && noise_sigma_vel >= 0.0, ErrorCode::kConfig, "lidar noise sigmas must be >= 0");
}

int LidarModel::azimuth_steps() const {
  return std::max(1, static_cast<int>(std::lround(fov_h_deg / angular_resolution_deg)));
}

Vec3 LidarModel::ray_direction(int channel, int step) const {
  const int steps = azimuth_steps();
  const double az = (-fov_h_deg / 2.0 + (step + 0.5) * fov_h_deg / steps) * kDeg;
  const double el = channels == 1
                        ? elevation_center_deg * kDeg
                        : (elevation_center_deg - fov_v_deg / 2.0 + channel * fov_v_deg / (channels - 1)) * kDeg;
  return {std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el)};
}

Pose ActorTrack::pose_at(double t) const {
  Pose p = pose0;
  p.yaw = wrap_angle(pose0.yaw + yaw_rate * t);
  if (std::abs(yaw_rate) < 1e-12) {
    p.x += velocity.x() * t;
    p.y += velocity.y() * t;
    return p;
  }
  const double speed = velocity.norm();
  const double h0 = std::atan2(velocity.y(), velocity.x());
  const double h1 = h0 + yaw_rate * t;
  p.x += speed / yaw_rate * (std::sin(h1) - std::sin(h0));
  p.y += speed / yaw_rate * (std::cos(h0) - std::cos(h1));
  return p;
}

Vec2 ActorTrack::velocity_at(double t) const {
  if (std::abs(yaw_rate) < 1e-12) return velocity;
  const double a = yaw_rate * t;
  return {std::cos(a) * velocity.x() - std::sin(a) * velocity.y(),
          std::sin(a) * velocity.x() + std::cos(a) * velocity.y()};
}

DetectionBox Scene::actor_box(const ActorTrack& a, double t) const {
  const Pose p = a.pose_at(t);
  DetectionBox b;
  b.center = {p.x, p.y, ground_z + a.dims.z() / 2.0};
  b.dims = a.dims;
  b.yaw = p.yaw;
  b.cls = a.cls;
  b.velocity = a.velocity_at(t);
  b.actor_id = a.id;
  return b;
}

void SceneConfig::validate() const {
  require(extent.x_max > extent.x_min && extent.y_max > extent.y_min, ErrorCode::kConfig, "scene extent is empty");
  require(dynamic_speed_floor >= 0.0, ErrorCode::kConfig, "dynamic_speed_floor must be >= 0");
  require(max_placement_attempts >= 1, ErrorCode::kConfig, "max_placement_attempts must be >= 1");
  for (const ClassSpawn& c : classes) {
    const std::string name = class_name(c.cls);
    require(c.count >= 0, ErrorCode::kConfig, name + ": count must be >= 0");
    require(c.dynamic <= c.count, ErrorCode::kConfig, name + ": dynamic exceeds count");
    require((c.dims_mean.array() > 0.0).all(), ErrorCode::kConfig, name + ": dims must be > 0");
    require(c.dims_jitter >= 0.0 && c.dims_jitter < 1.0, ErrorCode::kConfig, name + ": dims_jitter in [0,1)");
    require(c.speed_min >= 0.0 && c.speed_max >= c.speed_min && c.speed_max <= max_speed, ErrorCode::kConfig,
            name + ": speed range outside physical bounds");
    const int dyn = c.dynamic < 0 ? c.count : c.dynamic;
    require(dyn == 0 || c.speed_min >= dynamic_speed_floor, ErrorCode::kConfig,
            name + ": speed_min below dynamic_speed_floor");
  }
  if (lanes.empty()) {
    for (const ClassSpawn& c : classes) {
      require(c.placement != Placement::kLanes || c.count == 0, ErrorCode::kConfig,
              "lane placement requested but no lanes configured");
    }
  }
}

std::vector<ClassSpawn> SceneConfig::default_classes() {
  return {
      {ObjectClass::kCar, 8, 6, {4.5, 1.9, 1.6}, 0.05, 5.0, 15.0, Placement::kLanes},
      {ObjectClass::kVan, 2, 1, {5.6, 2.1, 2.3}, 0.05, 5.0, 12.0, Placement::kLanes},
      {ObjectClass::kCyclist, 2, 2, {1.8, 0.7, 1.7}, 0.05, 2.0, 6.0, Placement::kLanes},
      {ObjectClass::kPedestrian, 4, 2, {0.7, 0.7, 1.75}, 0.1, 1.0, 1.8, Placement::kFree},
      {ObjectClass::kTrafficCone, 4, 0, {0.4, 0.4, 0.75}, 0.05, 0.0, 0.0, Placement::kFree},
  };
}

Scene generate_scene(const SceneConfig& config, std::uint64_t seed) {
  config.validate();
  Scene scene;
  scene.ground_z = config.ground_z;
  scene.extent = config.extent;
  scene.rng_seed = seed;
  scene.ego.id = -1;
  scene.ego.cls = ObjectClass::kCar;
  scene.ego.dims = {4.5, 1.9, 1.6};
  scene.ego.velocity = {config.ego_speed, 0.0};
  scene.ego.yaw_rate = config.ego_yaw_rate;

  std::mt19937_64 rng(mix_seed(seed, 0));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  struct Placed {
    Pose pose;
    Vec2 half;
  };
  std::vector<Placed> placed;
  const double margin = config.spacing_margin / 2.0;
  placed.push_back({Pose{}, Vec2{scene.ego.dims.x() / 2 + margin, scene.ego.dims.y() / 2 + margin}});

  for (const ClassSpawn& spawn : config.classes) {
    const int dynamic = spawn.dynamic < 0 ? spawn.count : spawn.dynamic;
    for (int k = 0; k < spawn.count; ++k) {
      ActorTrack actor;
      actor.id = static_cast<int>(scene.actors.size());
      actor.cls = spawn.cls;
      for (int d = 0; d < 3; ++d) {
        actor.dims[d] = spawn.dims_mean[d] * (1.0 + uniform(-spawn.dims_jitter, spawn.dims_jitter));
      }
      const bool moving = k < dynamic;
      const double speed = moving ? uniform(spawn.speed_min, spawn.speed_max) : 0.0;
      const Vec2 half{actor.dims.x() / 2 + margin, actor.dims.y() / 2 + margin};

      bool ok = false;
      for (int attempt = 0; attempt < config.max_placement_attempts && !ok; ++attempt) {
        Pose pose;
        if (spawn.placement == Placement::kLanes) {
          const auto lane_idx = static_cast<std::size_t>(unit(rng) * static_cast<double>(config.lanes.size()));
          const Lane& lane = config.lanes[std::min(lane_idx, config.lanes.size() - 1)];
          pose.x = uniform(std::max(config.extent.x_min, config.spawn_x_min) + actor.dims.x() / 2,
                           config.extent.x_max - actor.dims.x() / 2);
          pose.y = lane.y + uniform(-config.lane_jitter, config.lane_jitter);
          pose.yaw = lane.direction > 0 ? 0.0 : std::numbers::pi;
        } else {
          pose.x = uniform(std::max(config.extent.x_min, config.spawn_x_min) + actor.dims.x() / 2,
                           config.extent.x_max - actor.dims.x() / 2);
          pose.y = uniform(config.extent.y_min + actor.dims.x() / 2, config.extent.y_max - actor.dims.x() / 2);
          pose.yaw = wrap_angle(uniform(-std::numbers::pi, std::numbers::pi));
        }
        bool clear = true;
        for (const Placed& other : placed) {
          if (footprints_overlap(pose, half, other.pose, other.half)) {
            clear = false;
            break;
          }
        }
        if (!clear) continue;
        actor.pose0 = pose;
        actor.velocity = {speed * std::cos(pose.yaw), speed * std::sin(pose.yaw)};
        placed.push_back({pose, half});
        ok = true;
      }
      if (!ok) {
        fail(ErrorCode::kPlacement, std::string("could not place ") + class_name(spawn.cls) + " #" + std::to_string(k) +
                                        " without overlap after " + std::to_string(config.max_placement_attempts) +
                                        " attempts");
      }
      scene.actors.push_back(actor);
    }
  }
  return scene;
}

PointCloudFrame scan_frame(const Scene& scene, double t, const LidarModel& lidar, std::uint64_t seed) {
  lidar.validate();
  PointCloudFrame frame;
  frame.timestamp = t;
  frame.lidar = lidar;
  const Pose ego = scene.ego.pose_at(t);
  frame.ego_pose = ego;
  const Vec2 ego_vel = scene.ego.velocity_at(t);
  const Vec3 ego_vel_world{ego_vel.x(), ego_vel.y(), 0.0};
  {
    const double c = std::cos(ego.yaw), s = std::sin(ego.yaw);
    frame.ego_velocity_gt = {c * ego_vel.x() + s * ego_vel.y(), -s * ego_vel.x() + c * ego_vel.y(), 0.0};
  }

  std::vector<BoxAtTime> boxes;
  boxes.reserve(scene.actors.size());
  for (const ActorTrack& a : scene.actors) {
    const Pose p = a.pose_at(t);
    boxes.push_back({{p.x, p.y, scene.ground_z + a.dims.z() / 2.0},
                     std::cos(p.yaw),
                     std::sin(p.yaw),
                     a.dims / 2.0,
                     a.velocity_at(t),
                     a.yaw_rate});
  }

  std::mt19937_64 rng(mix_seed(seed, 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const bool noisy = lidar.noise_sigma_range > 0.0 || lidar.noise_sigma_vel > 0.0;

  const Vec3 origin{ego.x, ego.y, 0.0};
  const double cy = std::cos(ego.yaw), sy = std::sin(ego.yaw);
  const int steps = lidar.azimuth_steps();
  frame.points.reserve(static_cast<std::size_t>(lidar.channels) * steps / 2);

  for (int ch = 0; ch < lidar.channels; ++ch) {
    for (int st = 0; st < steps; ++st) {
      const Vec3 d_ego = lidar.ray_direction(ch, st);
      const Vec3 d{cy * d_ego.x() - sy * d_ego.y(), sy * d_ego.x() + cy * d_ego.y(), d_ego.z()};

      double best = std::numeric_limits<double>::infinity();
      int source = -2;
      int face = 2;
      if (d.z() < 0.0) {
        const double tg = (scene.ground_z - origin.z()) / d.z();
        if (tg > 0.0) {
          best = tg;
          source = kGroundSource;
        }
      }
      for (std::size_t a = 0; a < boxes.size(); ++a) {
        int axis = 0;
        const double th = intersect_box(boxes[a], origin, d, &axis);
        if (th < best) {
          best = th;
          source = static_cast<int>(a);
          face = axis;
        }
      }
      if (source == -2 || best > lidar.max_range) continue;

      Vec3 point_vel = Vec3::Zero();
      double cos_inc = std::abs(d.z());
      if (source != kGroundSource) {
        const BoxAtTime& box = boxes[static_cast<std::size_t>(source)];
        const Vec3 hit = origin + best * d;
        const Vec2 r{hit.x() - box.center.x(), hit.y() - box.center.y()};
        point_vel = {box.velocity.x() - box.yaw_rate * r.y(), box.velocity.y() + box.yaw_rate * r.x(), 0.0};
        Vec3 normal = Vec3::UnitZ();
        if (face == 0) normal = {box.cos_yaw, box.sin_yaw, 0.0};
        if (face == 1) normal = {-box.sin_yaw, box.cos_yaw, 0.0};
        cos_inc = std::abs(normal.dot(d));
      }
      double v = (point_vel - ego_vel_world).dot(d);
      double range = best;
      if (noisy) {
        range += lidar.noise_sigma_range * gauss(rng);
        v += lidar.noise_sigma_vel * gauss(rng);
      }
      if (range <= 0.0 || range > lidar.max_range) continue;

      LidarPoint p;
      p.x = range * d_ego.x();
      p.y = range * d_ego.y();
      p.z = range * d_ego.z();
      p.v = v;
      p.intensity = std::clamp(base_intensity(source, scene) * (0.3 + 0.7 * cos_inc), 0.0, 1.0);
      frame.points.push_back(p);
      frame.source_ids.push_back(source);
    }
  }
  return frame;
}

std::vector<DetectionBox> ground_truth_boxes(const Scene& scene, double t_query, double t_ref) {
  const Pose ref = scene.ego.pose_at(t_ref);
  std::vector<DetectionBox> out;
  out.reserve(scene.actors.size());
  const double c = std::cos(ref.yaw), s = std::sin(ref.yaw);
  for (const ActorTrack& a : scene.actors) {
    DetectionBox b = scene.actor_box(a, t_query);
    b.center = ref.apply_inverse(b.center);
    b.yaw = wrap_angle(b.yaw - ref.yaw);
    b.velocity = Vec2{c * b.velocity.x() + s * b.velocity.y(), -s * b.velocity.x() + c * b.velocity.y()};
    b.t_query = t_query;
    b.t_ref = t_ref;
    b.horizon = t_query - t_ref;
    b.time_tag = t_query > t_ref ? TimeTag::kFuture : TimeTag::kCurrent;
    out.push_back(b);
  }
  return out;
}

}  // namespace pod4d::sim
