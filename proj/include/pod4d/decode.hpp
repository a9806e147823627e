#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "pod4d/bevmap.hpp"
#include "pod4d/box.hpp"
#include "pod4d/preprocess.hpp"

namespace pod4d::decode {

struct ClassPrior {
  ObjectClass cls = ObjectClass::kCar;
  Vec3 dims{4.5, 1.9, 1.6};  // length, width, height
};

std::array<ClassPrior, kNumClasses> default_priors();

struct DecodeParams {
  double cell_size = 0.2;
  double connect_radius = 0.6;
  // Moving cells with similar velocity bridge larger gaps (grazing-angle surfaces).
  double moving_speed = 2.5;
  double moving_connect_radius = 2.0;
  double velocity_gate = 0.5;
  int min_points = 5;
  double score_cap = 100.0;  // score = min(1, points / score_cap)
  double min_extent = 0.1;   // floor for degenerate footprints
  double min_height = 0.25;  // shorter clusters are treated as ground clutter
  bool complete_to_prior = true;
  // Future boxes keep the shape fitted to the twins' current positions and move by
  // the mean virtual displacement; false fits the virtual points directly.
  bool rigid_future = true;
  // Rigid future boxes move along their heading at the speed that best explains the
  // radial displacements, unless the mean squared cosine between heading and rays is
  // below min_heading_alignment; then they move by the mean displacement.
  bool motion_along_heading = true;
  double min_heading_alignment = 0.25;
  // Ground plane n . p + offset = 0 used for box bottoms.
  Vec3 ground_normal = Vec3::UnitZ();
  double ground_offset = 1.8;
  std::array<ClassPrior, kNumClasses> priors = default_priors();

  void validate() const;
  double ground_height(double x, double y) const;
};

struct Cluster {
  std::vector<std::size_t> members;  // indices into the clustered point list
};

// Connected components of the 2D occupancy grid. Two occupied cells are linked
// when the gap between them, (|di| - 1) * cell and (|dj| - 1) * cell, is within the
// connection radius on both axes. With per-point velocities, two cells whose mean
// |v| reaches moving_speed and whose means differ by at most velocity_gate link
// across moving_connect_radius. Clusters are ordered by their lowest cell.
std::vector<Cluster> cluster_points(std::span<const Vec3> points, const DecodeParams& params,
                                    std::span<const double> velocities = {});

// Non-ground points only; member indices refer to `points`.
std::vector<Cluster> segment_foreground(std::span<const preprocess::CompensatedPoint> points,
                                        const DecodeParams& params);

// Convex hull (counter-clockwise, no collinear points).
std::vector<Vec2> convex_hull(std::vector<Vec2> points);

struct Rectangle {
  Vec2 center = Vec2::Zero();
  double length = 0.0;  // along yaw
  double width = 0.0;
  double yaw = 0.0;  // in (-pi/2, pi/2], direction of the longer side
};

// Minimum-area enclosing rectangle by rotating calipers; sides floored at min_extent.
Rectangle min_area_rectangle(std::span<const Vec2> points, double min_extent);

// Orientation maximizing edge closeness: every point scores 1 / max(d, closeness_floor)
// where d is its distance to the nearest side of the bounding rectangle at that
// orientation. Unlike the minimum area, this keeps partially observed L shapes square.
Rectangle closeness_rectangle(std::span<const Vec2> points, double min_extent);

struct ClassMatch {
  ObjectClass cls = ObjectClass::kCar;
  bool end_on = false;  // observed long side matched the template width
  double distance = 0.0;
};

// Log-space nearest template. The observed short side is a lower bound and the
// observed long side may match either the template length or width.
ClassMatch classify(const Vec3& observed_dims, const DecodeParams& params);

// Raw geometric box: footprint from the closeness rectangle, bottom on the
// ground plane (or the lowest point if lower), top at the highest point.
DetectionBox fit_box(std::span<const Vec3> points, const DecodeParams& params);

// Grows the box to the prior dimensions of its class, extending away from the sensor.
DetectionBox complete_to_prior(const DetectionBox& box, const Vec3& sensor_origin, const DecodeParams& params);

struct DecodeResult {
  std::vector<DetectionBox> current;
  std::vector<DetectionBox> future;
  std::size_t unsupported = 0;  // clusters dropped for lack of BEV support
};

struct FrameContext {
  std::string frame_id;
  double t_ref = 0.0;
  const bevmap::BevMap* support_current = nullptr;  // optional gating maps
  const bevmap::BevMap* support_future = nullptr;
};

// t_label 0 records yield current boxes, t_label 1 records future boxes.
DecodeResult decode_frame(const preprocess::TwoFramePoints& points, const DecodeParams& params,
                          const FrameContext& context = {});

// Decodes one point set with the given time tag.
std::vector<DetectionBox> decode_points(std::span<const Vec3> points, const Vec3& sensor_origin,
                                        const DecodeParams& params, const bevmap::BevMap* support,
                                        std::size_t* unsupported = nullptr, std::span<const double> velocities = {});

// Rigid future boxes: shape from `twins` (the current positions of `future`),
// translated in the ground plane by the mean displacement of each cluster.
std::vector<DetectionBox> decode_rigid_future(std::span<const Vec3> future, std::span<const Vec3> twins,
                                              const Vec3& sensor_origin, const DecodeParams& params,
                                              const bevmap::BevMap* support, std::size_t* unsupported = nullptr,
                                              std::span<const double> velocities = {});

}  // namespace pod4d::decode
