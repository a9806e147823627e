#pragma once

#include <string>

#include "pod4d/common.hpp"

namespace pod4d {

// Rigid transform in the ground plane plus a vertical offset.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  Vec3 apply(const Vec3& p) const;          // local -> parent
  Vec3 apply_inverse(const Vec3& p) const;  // parent -> local
};

enum class TimeTag : int { kCurrent = 0, kFuture = 1 };

const char* time_tag_name(TimeTag t);
TimeTag time_tag_from_name(const std::string& name);

// Oriented 3D box. Used for annotations and detections alike; fields that do
// not apply to one of them keep their defaults.
struct DetectionBox {
  Vec3 center = Vec3::Zero();
  Vec3 dims = Vec3::Ones();  // length, width, height
  double yaw = 0.0;
  ObjectClass cls = ObjectClass::kCar;
  double score = 1.0;
  TimeTag time_tag = TimeTag::kCurrent;
  std::string frame_ref;

  double t_query = 0.0;
  double t_ref = 0.0;
  double horizon = 0.0;
  Vec2 velocity = Vec2::Zero();
  int actor_id = -1;
  int num_points = -1;

  bool contains(const Vec3& p, double inflate = 0.0) const;
};

}  // namespace pod4d
