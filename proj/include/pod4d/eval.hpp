#pragma once

#include <array>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pod4d/box.hpp"

namespace pod4d::eval {

struct EvalConfig {
  // Indexed by ObjectClass.
  std::array<double, kNumClasses> iou_thresholds{0.5, 0.25, 0.25, 0.5, 0.25};
  int recall_positions = 40;
  int min_gt_points = 1;             // standard task
  int predictive_min_gt_points = 0;  // predictive task; 0 keeps every future box

  void validate() const;
};

// Re-expresses boxes given in the frame of pose_src in the frame of pose_dst.
std::vector<DetectionBox> transform_boxes(std::span<const DetectionBox> boxes, const Pose& pose_src,
                                          const Pose& pose_dst);

// Counter-clockwise footprint corners.
std::array<Vec2, 4> footprint(const DetectionBox& b);
double polygon_area(std::span<const Vec2> poly);
// Sutherland-Hodgman clipping of a convex polygon against a convex counter-clockwise clip polygon.
std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);
double bev_intersection_area(const DetectionBox& a, const DetectionBox& b);
double iou_3d(const DetectionBox& a, const DetectionBox& b);

struct ScoredDetection {
  double score = 0.0;
  bool true_positive = false;
};

struct MatchResult {
  std::vector<ScoredDetection> detections;  // same-class detections in descending score order
  std::vector<int> det_to_gt;               // matched GT index (into gts) or -1
  int num_gt = 0;
  int false_negatives = 0;
};

// Greedy in descending score: each detection takes the unmatched same-class GT with
// the highest IoU if that IoU reaches the threshold.
MatchResult match_detections(std::span<const DetectionBox> dets, std::span<const DetectionBox> gts, ObjectClass cls,
                             double threshold);

// Interpolated precision averaged over recall r = k / positions, k = 1..positions.
// Returns nullopt when there is no ground truth.
std::optional<double> average_precision(std::vector<ScoredDetection> pooled, int num_gt, int recall_positions = 40);

enum class Task { kStandard, kPredictive };

const char* task_name(Task t);
Task task_from_name(const std::string& name);

struct ClassResult {
  std::optional<double> ap;
  int num_gt = 0;
  int num_det = 0;
  int true_positives = 0;
};

struct EvalReport {
  Task task = Task::kStandard;
  double horizon = 0.0;
  std::array<ClassResult, kNumClasses> classes;
  std::optional<double> mean_ap;
  std::vector<std::string> missing_detection_frames;
  std::vector<std::string> unexpected_detection_frames;
  std::size_t frames = 0;

  nlohmann::json to_json() const;
  std::string to_table() const;
};

using FrameBoxes = std::map<std::string, std::vector<DetectionBox>>;

// Standard: current-tagged detections against GT with t_query == t_ref and at least
// min_gt_points points. Predictive: future-tagged detections against GT at
// t_query - t_ref == horizon, already expressed in the current frame.
EvalReport evaluate_run(const FrameBoxes& detections, const FrameBoxes& ground_truth, Task task, double horizon,
                        const EvalConfig& cfg);

}  // namespace pod4d::eval
