#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pod4d/box.hpp"
#include "pod4d/common.hpp"

namespace pod4d::sim {

struct LidarModel {
  int channels = 128;
  double fov_h_deg = 100.0;
  double fov_v_deg = 30.0;
  double elevation_center_deg = -5.0;
  double angular_resolution_deg = 0.2;  // azimuth step
  double max_range = 200.0;
  double rate_hz = 10.0;
  double noise_sigma_range = 0.02;
  double noise_sigma_vel = 0.05;

  void validate() const;
  int azimuth_steps() const;
  // Unit ray direction in the sensor frame for beam (channel, azimuth step).
  Vec3 ray_direction(int channel, int step) const;
};

struct ActorTrack {
  int id = -1;
  ObjectClass cls = ObjectClass::kCar;
  Vec3 dims{4.5, 1.9, 1.6};
  Pose pose0;  // z unused; actors rest on the ground plane
  Vec2 velocity = Vec2::Zero();
  double yaw_rate = 0.0;

  // Constant speed; with a nonzero yaw rate the velocity turns with the body.
  Pose pose_at(double t) const;
  Vec2 velocity_at(double t) const;
};

struct Extent {
  double x_min = -20.0;
  double x_max = 160.0;
  double y_min = -40.0;
  double y_max = 40.0;
};

struct Scene {
  std::vector<ActorTrack> actors;
  ActorTrack ego;
  double ground_z = -1.8;
  Extent extent;
  std::uint64_t rng_seed = 0;

  DetectionBox actor_box(const ActorTrack& a, double t) const;  // world frame
};

enum class Placement { kLanes, kFree };

struct ClassSpawn {
  ObjectClass cls = ObjectClass::kCar;
  int count = 0;
  int dynamic = -1;  // actors that move; -1 means all of them
  Vec3 dims_mean{4.5, 1.9, 1.6};
  double dims_jitter = 0.05;  // relative, uniform
  double speed_min = 0.0;
  double speed_max = 0.0;
  Placement placement = Placement::kLanes;
};

struct Lane {
  double y = 0.0;
  int direction = 1;  // +1 drives along +x, -1 oncoming
};

struct SceneConfig {
  Extent extent;
  double ground_z = -1.8;
  double ego_speed = 10.0;
  double ego_yaw_rate = 0.0;
  std::vector<ClassSpawn> classes;
  std::vector<Lane> lanes{{-3.5, 1}, {3.5, 1}, {7.0, -1}};
  double lane_jitter = 0.3;
  double spawn_x_min = 8.0;  // nothing spawns closer than this ahead of the ego
  double dynamic_speed_floor = 1.0;
  double max_speed = 70.0;
  double spacing_margin = 1.0;
  int max_placement_attempts = 2000;

  void validate() const;
  static std::vector<ClassSpawn> default_classes();
};

Scene generate_scene(const SceneConfig& config, std::uint64_t seed);

struct LidarPoint {
  double x = 0, y = 0, z = 0;
  double intensity = 0;
  double v = 0;  // radial velocity relative to the sensor, positive = receding

  Vec3 position() const { return {x, y, z}; }
};

inline constexpr int kGroundSource = -1;

struct PointCloudFrame {
  std::string frame_id;
  std::vector<LidarPoint> points;
  Vec3 sensor_origin = Vec3::Zero();
  double timestamp = 0.0;
  Pose ego_pose;
  Vec3 ego_velocity_gt = Vec3::Zero();
  LidarModel lidar;
  // Per-point source: actor id or kGroundSource. Only populated by the simulator.
  std::vector<int> source_ids;
};

PointCloudFrame scan_frame(const Scene& scene, double t, const LidarModel& lidar, std::uint64_t seed);

// Actor boxes at t_query expressed in the ego frame at t_ref.
std::vector<DetectionBox> ground_truth_boxes(const Scene& scene, double t_query, double t_ref);

}  // namespace pod4d::sim
