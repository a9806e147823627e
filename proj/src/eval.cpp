#include "pod4d/eval.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pod4d::eval {

void EvalConfig::validate() const {
  for (double t : iou_thresholds) {
    require(t > 0.0 && t <= 1.0, ErrorCode::kConfig, "IoU thresholds must lie in (0, 1]");
  }
  require(recall_positions >= 1, ErrorCode::kConfig, "recall_positions must be >= 1");
  require(min_gt_points >= 0 && predictive_min_gt_points >= 0, ErrorCode::kConfig, "min point counts must be >= 0");
}

std::vector<DetectionBox> transform_boxes(std::span<const DetectionBox> boxes, const Pose& pose_src,
                                          const Pose& pose_dst) {
  const double dyaw = pose_src.yaw - pose_dst.yaw;
  const double c = std::cos(dyaw), s = std::sin(dyaw);
  std::vector<DetectionBox> out(boxes.begin(), boxes.end());
  for (DetectionBox& b : out) {
    b.center = pose_dst.apply_inverse(pose_src.apply(b.center));
    b.yaw = wrap_angle(b.yaw + dyaw);
    b.velocity = Vec2{c * b.velocity.x() - s * b.velocity.y(), s * b.velocity.x() + c * b.velocity.y()};
  }
  return out;
}

std::array<Vec2, 4> footprint(const DetectionBox& b) {
  const Vec2 u = Vec2{std::cos(b.yaw), std::sin(b.yaw)} * (b.dims.x() / 2.0);
  const Vec2 v = Vec2{-std::sin(b.yaw), std::cos(b.yaw)} * (b.dims.y() / 2.0);
  const Vec2 c = b.center.head<2>();
  return {c - u - v, c + u - v, c + u + v, c - u + v};
}

double polygon_area(std::span<const Vec2> poly) {
  double twice = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    twice += a.x() * b.y() - a.y() * b.x();
  }
  return std::abs(twice) / 2.0;
}

std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> poly(subject.begin(), subject.end());
  for (std::size_t e = 0; e < clip.size() && !poly.empty(); ++e) {
    const Vec2& a = clip[e];
    const Vec2& b = clip[(e + 1) % clip.size()];
    const Vec2 edge = b - a;
    auto side = [&](const Vec2& p) { return edge.x() * (p.y() - a.y()) - edge.y() * (p.x() - a.x()); };
    std::vector<Vec2> next;
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Vec2& cur = poly[i];
      const Vec2& prev = poly[(i + poly.size() - 1) % poly.size()];
      const double sc = side(cur), sp = side(prev);
      if (sc >= 0.0) {
        if (sp < 0.0) next.push_back(prev + (cur - prev) * (sp / (sp - sc)));
        next.push_back(cur);
      } else if (sp >= 0.0) {
        next.push_back(prev + (cur - prev) * (sp / (sp - sc)));
      }
    }
    poly = std::move(next);
  }
  return poly;
}

double bev_intersection_area(const DetectionBox& a, const DetectionBox& b) {
  const auto pa = footprint(a);
  const auto pb = footprint(b);
  const auto poly = clip_convex(pa, pb);
  return poly.size() < 3 ? 0.0 : polygon_area(poly);
}

double iou_3d(const DetectionBox& a, const DetectionBox& b) {
  const double vol_a = a.dims.prod(), vol_b = b.dims.prod();
  if (!(vol_a > 0.0) || !(vol_b > 0.0)) return 0.0;
  const double top = std::min(a.center.z() + a.dims.z() / 2.0, b.center.z() + b.dims.z() / 2.0);
  const double bottom = std::max(a.center.z() - a.dims.z() / 2.0, b.center.z() - b.dims.z() / 2.0);
  const double overlap = top - bottom;
  if (overlap <= 0.0) return 0.0;
  const double inter = bev_intersection_area(a, b) * overlap;
  const double uni = vol_a + vol_b - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

MatchResult match_detections(std::span<const DetectionBox> dets, std::span<const DetectionBox> gts, ObjectClass cls,
                             double threshold) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < dets.size(); ++i) {
    if (dets[i].cls == cls) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  MatchResult r;
  std::vector<char> taken(gts.size(), 0);
  for (std::size_t g = 0; g < gts.size(); ++g) r.num_gt += gts[g].cls == cls;
  for (std::size_t i : order) {
    int best = -1;
    double best_iou = threshold;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g] || gts[g].cls != cls) continue;
      const double iou = iou_3d(dets[i], gts[g]);
      if (iou >= best_iou && (best < 0 || iou > best_iou)) {
        best = static_cast<int>(g);
        best_iou = iou;
      }
    }
    if (best >= 0) taken[static_cast<std::size_t>(best)] = 1;
    r.detections.push_back({dets[i].score, best >= 0});
    r.det_to_gt.push_back(best);
  }
  const auto unmatched = std::count(r.det_to_gt.begin(), r.det_to_gt.end(), -1);
  r.false_negatives = r.num_gt - static_cast<int>(static_cast<std::ptrdiff_t>(r.det_to_gt.size()) - unmatched);
  return r;
}

std::optional<double> average_precision(std::vector<ScoredDetection> pooled, int num_gt, int recall_positions) {
  require(recall_positions >= 1, ErrorCode::kInvalidArgument, "recall_positions must be >= 1");
  if (num_gt <= 0) return std::nullopt;
  std::stable_sort(pooled.begin(), pooled.end(),
                   [](const ScoredDetection& a, const ScoredDetection& b) { return a.score > b.score; });
  // best[k]: max precision over operating points with recall >= k / positions.
  std::vector<double> best(static_cast<std::size_t>(recall_positions) + 1, 0.0);
  long long tp = 0;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    tp += pooled[i].true_positive;
    const double precision = static_cast<double>(tp) / static_cast<double>(i + 1);
    // Largest k with k * num_gt <= tp * positions.
    const long long k = tp * recall_positions / num_gt;
    const auto kk = static_cast<std::size_t>(std::min<long long>(k, recall_positions));
    best[kk] = std::max(best[kk], precision);
  }
  for (std::size_t k = best.size() - 1; k-- > 0;) best[k] = std::max(best[k], best[k + 1]);
  double sum = 0.0;
  for (std::size_t k = 1; k < best.size(); ++k) sum += best[k];
  return sum / recall_positions;
}

const char* task_name(Task t) { return t == Task::kStandard ? "standard" : "predictive"; }

Task task_from_name(const std::string& name) {
  if (name == "standard") return Task::kStandard;
  if (name == "predictive") return Task::kPredictive;
  fail(ErrorCode::kConfig, "unknown evaluation task '" + name + "'");
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json classes_json = nlohmann::json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    const ClassResult& r = classes[static_cast<std::size_t>(c)];
    classes_json[class_name(static_cast<ObjectClass>(c))] = {
        {"ap", r.ap ? nlohmann::json(*r.ap) : nlohmann::json(nullptr)},
        {"num_gt", r.num_gt},
        {"num_det", r.num_det},
        {"true_positives", r.true_positives}};
  }
  return {{"task", task_name(task)},
          {"horizon", horizon},
          {"frames", frames},
          {"classes", classes_json},
          {"mAP", mean_ap ? nlohmann::json(*mean_ap) : nlohmann::json(nullptr)},
          {"missing_detection_frames", missing_detection_frames},
          {"unexpected_detection_frames", unexpected_detection_frames}};
}

std::string EvalReport::to_table() const {
  auto pct = [](const std::optional<double>& v) { return v ? fmt::format("{:.2f}", *v * 100.0) : std::string("n/a"); };
  std::string out = fmt::format("task: {}  horizon: {:.2f} s  frames: {}\n", task_name(task), horizon, frames);
  out += fmt::format("{:<14}{:>9}{:>8}{:>8}{:>8}\n", "class", "AP-R40", "GT", "Det", "TP");
  for (int c = 0; c < kNumClasses; ++c) {
    const ClassResult& r = classes[static_cast<std::size_t>(c)];
    out += fmt::format("{:<14}{:>9}{:>8}{:>8}{:>8}\n", class_name(static_cast<ObjectClass>(c)), pct(r.ap), r.num_gt,
                       r.num_det, r.true_positives);
  }
  out += fmt::format("{:<14}{:>9}\n", "mAP", pct(mean_ap));
  if (!missing_detection_frames.empty()) {
    out += fmt::format("missing detection frames: {}\n", missing_detection_frames.size());
  }
  return out;
}

EvalReport evaluate_run(const FrameBoxes& detections, const FrameBoxes& ground_truth, Task task, double horizon,
                        const EvalConfig& cfg) {
  cfg.validate();
  require(task == Task::kStandard || horizon > 0.0, ErrorCode::kInvalidArgument,
          "predictive evaluation needs a positive horizon");
  EvalReport report;
  report.task = task;
  report.horizon = task == Task::kStandard ? 0.0 : horizon;
  report.frames = ground_truth.size();
  const TimeTag want = task == Task::kStandard ? TimeTag::kCurrent : TimeTag::kFuture;
  const int min_points = task == Task::kStandard ? cfg.min_gt_points : cfg.predictive_min_gt_points;
  constexpr double kTimeTolerance = 1e-6;

  std::array<std::vector<ScoredDetection>, kNumClasses> pooled;
  static const std::vector<DetectionBox> kNone;
  for (const auto& [frame, gt_all] : ground_truth) {
    std::vector<DetectionBox> gts;
    for (const DetectionBox& g : gt_all) {
      const double dt = g.t_query - g.t_ref;
      if (std::abs(dt - report.horizon) > kTimeTolerance) continue;
      if (g.num_points >= 0 && g.num_points < min_points) continue;
      gts.push_back(g);
    }
    auto it = detections.find(frame);
    if (it == detections.end()) report.missing_detection_frames.push_back(frame);
    const auto& dets_all = it == detections.end() ? kNone : it->second;
    std::vector<DetectionBox> dets;
    for (const DetectionBox& d : dets_all) {
      if (d.time_tag == want) dets.push_back(d);
    }
    for (int c = 0; c < kNumClasses; ++c) {
      const auto cls = static_cast<ObjectClass>(c);
      const MatchResult m = match_detections(dets, gts, cls, cfg.iou_thresholds[static_cast<std::size_t>(c)]);
      ClassResult& r = report.classes[static_cast<std::size_t>(c)];
      r.num_gt += m.num_gt;
      r.num_det += static_cast<int>(m.detections.size());
      for (const ScoredDetection& s : m.detections) r.true_positives += s.true_positive;
      auto& pool = pooled[static_cast<std::size_t>(c)];
      pool.insert(pool.end(), m.detections.begin(), m.detections.end());
    }
  }
  for (const auto& [frame, _] : detections) {
    if (!ground_truth.count(frame)) report.unexpected_detection_frames.push_back(frame);
  }
  double sum = 0.0;
  int defined = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    ClassResult& r = report.classes[static_cast<std::size_t>(c)];
    r.ap = average_precision(pooled[static_cast<std::size_t>(c)], r.num_gt, cfg.recall_positions);
    if (r.ap) {
      sum += *r.ap;
      ++defined;
    }
  }
  if (defined > 0) report.mean_ap = sum / defined;
  return report;
}

}  // namespace pod4d::eval
