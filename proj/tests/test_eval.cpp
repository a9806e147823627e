#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "pod4d/eval.hpp"
#include "support.hpp"

using namespace pod4d;
using namespace pod4d::eval;

namespace {

DetectionBox box(Vec3 c, Vec3 d, double yaw, ObjectClass cls = ObjectClass::kCar, double score = 1.0) {
  DetectionBox b;
  b.center = c;
  b.dims = d;
  b.yaw = yaw;
  b.cls = cls;
  b.score = score;
  return b;
}

DetectionBox random_box(std::mt19937_64& rng, double spread = 1.5) {
  std::uniform_real_distribution<double> pos(-spread, spread), dim(0.5, 4.0), yaw(-std::numbers::pi, std::numbers::pi);
  return box({pos(rng), pos(rng), 0.3 * pos(rng)}, {dim(rng), dim(rng), dim(rng)}, yaw(rng));
}

// Intersection volume / volume of a, by uniform sampling inside a.
double sampled_overlap(const DetectionBox& a, const DetectionBox& b, int samples, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  const double c = std::cos(a.yaw), s = std::sin(a.yaw);
  int inside = 0;
  for (int i = 0; i < samples; ++i) {
    const double lx = u(rng) * a.dims.x(), ly = u(rng) * a.dims.y(), lz = u(rng) * a.dims.z();
    const Vec3 p = a.center + Vec3(c * lx - s * ly, s * lx + c * ly, lz);
    inside += b.contains(p);
  }
  return static_cast<double>(inside) / samples;
}

// Interpolated precision from the full PR curve, recall positions compared in integers.
double brute_force_ap(std::vector<ScoredDetection> d, int num_gt, int positions) {
  std::stable_sort(d.begin(), d.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  std::vector<int> tp_at(d.size());
  int tp = 0;
  for (std::size_t i = 0; i < d.size(); ++i) tp_at[i] = tp += d[i].true_positive;
  double sum = 0.0;
  for (int k = 1; k <= positions; ++k) {
    double p = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (static_cast<long long>(tp_at[i]) * positions >= static_cast<long long>(k) * num_gt) {
        p = std::max(p, static_cast<double>(tp_at[i]) / static_cast<double>(i + 1));
      }
    }
    sum += p;
  }
  return sum / positions;
}

FrameBoxes frames_of(const std::vector<DetectionBox>& boxes, const std::string& id) { return {{id, boxes}}; }

}  // namespace

TEST_CASE("transform_boxes") {
  const std::vector<DetectionBox> b{box({3.0, 1.0, 0.5}, {4, 2, 1.5}, 0.3)};
  const auto same = transform_boxes(b, Pose{}, Pose{});
  CHECK(same[0].center == b[0].center);
  CHECK(same[0].yaw == b[0].yaw);

  Pose moved;
  moved.x = 2.0;
  const auto shifted = transform_boxes(b, Pose{}, moved);
  CHECK(shifted[0].center.x() == doctest::Approx(1.0));
  CHECK(shifted[0].center.y() == doctest::Approx(1.0));
  CHECK(shifted[0].dims == b[0].dims);

  Pose turned;
  turned.yaw = std::numbers::pi / 2;
  const auto rotated = transform_boxes(b, turned, Pose{});
  CHECK(rotated[0].center.x() == doctest::Approx(-1.0));
  CHECK(rotated[0].center.y() == doctest::Approx(3.0));
  CHECK(rotated[0].yaw == doctest::Approx(0.3 + std::numbers::pi / 2));
  const auto back = transform_boxes(rotated, Pose{}, turned);
  CHECK((back[0].center - b[0].center).norm() < 1e-12);
}

TEST_CASE("iou analytic cases") {
  const DetectionBox a = box({0, 0, 0}, {2, 2, 2}, 0.0);
  CHECK(iou_3d(a, a) == doctest::Approx(1.0));
  CHECK(std::abs(iou_3d(a, box({1, 0, 0}, {2, 2, 2}, 0.0)) - 1.0 / 3.0) < 1e-4);
  const double oct = 8.0 * (std::sqrt(2.0) - 1.0);
  CHECK(bev_intersection_area(a, box({0, 0, 0}, {2, 2, 2}, std::numbers::pi / 4)) == doctest::Approx(oct));
  CHECK(std::abs(iou_3d(a, box({0, 0, 0}, {2, 2, 2}, std::numbers::pi / 4)) - 0.7071) < 1e-4);
  CHECK(iou_3d(a, box({5, 0, 0}, {2, 2, 2}, 0.0)) == 0.0);
  CHECK(iou_3d(a, box({0, 0, 3}, {2, 2, 2}, 0.0)) == 0.0);
  CHECK(iou_3d(box({0, 0, 0}, {2, 2, 0}, 0.0), box({0, 0, 0}, {2, 2, 0}, 0.0)) == 0.0);
  CHECK(iou_3d(a, box({0, 0, 0}, {2, 2, 2}, std::numbers::pi)) == doctest::Approx(1.0));
}

TEST_CASE("polygon helpers") {
  const std::vector<Vec2> sq{{0, 0}, {2, 0}, {2, 2}, {0, 2}};
  CHECK(polygon_area(sq) == doctest::Approx(4.0));
  const std::vector<Vec2> shifted{{1, 1}, {3, 1}, {3, 3}, {1, 3}};
  CHECK(polygon_area(clip_convex(sq, shifted)) == doctest::Approx(1.0));
  const std::vector<Vec2> far{{5, 5}, {6, 5}, {6, 6}, {5, 6}};
  CHECK(clip_convex(sq, far).empty());
  const auto fp = footprint(box({1, 1, 0}, {4, 2, 1}, 0.0));
  CHECK(fp[0] == Vec2(-1, 0));
  CHECK(fp[2] == Vec2(3, 2));
}

TEST_CASE("iou agrees with sampled volumes, is symmetric and rigid-motion invariant") {
  std::mt19937_64 rng(1);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const DetectionBox a = random_box(rng), b = random_box(rng);
    const double iou = iou_3d(a, b);
    CHECK(std::abs(iou - iou_3d(b, a)) <= 1e-12);
    Pose p;
    p.x = 7.0;
    p.y = -3.0;
    p.yaw = 1.1;
    const std::vector<DetectionBox> pair{a, b};
    const auto moved = transform_boxes(pair, p, Pose{});
    CHECK(std::abs(iou_3d(moved[0], moved[1]) - iou) < 1e-9);
    if (iou < 0.05) continue;
    const double frac = sampled_overlap(a, b, 400000, rng);
    const double va = a.dims.prod(), vb = b.dims.prod();
    const double inter = frac * va;
    CHECK(std::abs(inter / (va + vb - inter) - iou) <= 1e-2 * iou);
    ++checked;
  }
  CHECK(checked >= 20);
}

TEST_CASE("greedy matching examples") {
  const DetectionBox gt = box({0, 0, 0}, {4, 2, 1.5}, 0.0);
  const std::vector<DetectionBox> gts{gt};
  const MatchResult one = match_detections(std::vector<DetectionBox>{gt}, gts, ObjectClass::kCar, 0.5);
  REQUIRE(one.detections.size() == 1);
  CHECK(one.detections[0].true_positive);
  CHECK(one.false_negatives == 0);

  DetectionBox lo = gt, hi = gt;
  lo.score = 0.3;
  hi.score = 0.9;
  hi.center.x() += 0.2;
  const MatchResult two = match_detections(std::vector<DetectionBox>{lo, hi}, gts, ObjectClass::kCar, 0.5);
  REQUIRE(two.detections.size() == 2);
  CHECK(two.detections[0].score == 0.9);
  CHECK(two.detections[0].true_positive);
  CHECK_FALSE(two.detections[1].true_positive);

  DetectionBox ped = gt;
  ped.cls = ObjectClass::kPedestrian;
  const MatchResult other = match_detections(std::vector<DetectionBox>{ped}, gts, ObjectClass::kCar, 0.5);
  CHECK(other.detections.empty());
  CHECK(other.false_negatives == 1);
}

TEST_CASE("greedy matching equals a brute-force replay") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> score(0.0, 1.0);
  std::uniform_int_distribution<int> count(0, 6);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<DetectionBox> dets, gts;
    const int ng = count(rng), nd = count(rng);
    for (int i = 0; i < ng; ++i) gts.push_back(random_box(rng, 3.0));
    for (int i = 0; i < nd; ++i) {
      DetectionBox d = random_box(rng, 3.0);
      if (!gts.empty() && score(rng) < 0.6) {
        d = gts[static_cast<std::size_t>(i) % gts.size()];
        d.center.x() += 0.4 * (score(rng) - 0.5);
      }
      d.score = score(rng);
      dets.push_back(d);
    }
    const MatchResult m = match_detections(dets, gts, ObjectClass::kCar, 0.5);

    std::vector<std::vector<double>> iou(dets.size(), std::vector<double>(gts.size()));
    for (std::size_t i = 0; i < dets.size(); ++i)
      for (std::size_t g = 0; g < gts.size(); ++g) iou[i][g] = iou_3d(dets[i], gts[g]);
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return dets[a].score > dets[b].score; });
    std::vector<bool> used(gts.size(), false);
    std::vector<int> expected;
    for (std::size_t i : order) {
      int pick = -1;
      for (std::size_t g = 0; g < gts.size(); ++g) {
        if (used[g] || iou[i][g] < 0.5) continue;
        if (pick < 0 || iou[i][g] > iou[i][static_cast<std::size_t>(pick)]) pick = static_cast<int>(g);
      }
      if (pick >= 0) used[static_cast<std::size_t>(pick)] = true;
      expected.push_back(pick);
    }
    CHECK(m.det_to_gt == expected);
  }
}

TEST_CASE("AP examples") {
  CHECK(*average_precision({{0.9, true}, {0.8, true}}, 2) == doctest::Approx(1.0));
  CHECK(*average_precision({}, 3) == 0.0);
  CHECK(*average_precision({{0.9, true}, {0.8, false}}, 2) == doctest::Approx(0.5));
  CHECK_FALSE(average_precision({{0.9, false}}, 0).has_value());
  CHECK(*average_precision({{0.2, true}, {0.9, false}}, 1) == doctest::Approx(0.5));
  CHECK_THROWS_AS(average_precision({}, 1, 0), Error);
}

TEST_CASE("AP equals brute-force PR integration") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> n(0, 12), g(1, 9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const int num_gt = g(rng);
    std::vector<ScoredDetection> d;
    int tps = 0;
    for (int i = n(rng); i > 0; --i) {
      const bool tp = tps < num_gt && u(rng) < 0.5;
      tps += tp;
      d.push_back({std::round(u(rng) * 20.0) / 20.0, tp});
    }
    const double ap = *average_precision(d, num_gt);
    CHECK(std::abs(ap - brute_force_ap(d, num_gt, 40)) < 1e-9);
    CHECK(ap >= 0.0);
    CHECK(ap <= 1.0);
    if (tps < num_gt) {
      auto plus_tp = d;
      plus_tp.push_back({2.0, true});
      CHECK(*average_precision(plus_tp, num_gt) >= ap - 1e-12);
    }
    auto plus_fp = d;
    plus_fp.push_back({-1.0, false});
    CHECK(*average_precision(plus_fp, num_gt) <= ap + 1e-12);
  }
}

TEST_CASE("evaluate_run on exact, shifted and empty detections") {
  std::vector<DetectionBox> gts{box({10, 0, -1}, {4.5, 1.9, 1.6}, 0.1),
                                box({5, 4, -1}, {0.7, 0.7, 1.75}, 0.0, ObjectClass::kPedestrian)};
  for (auto& g : gts) g.num_points = 20;
  const EvalConfig cfg;
  const EvalReport exact = evaluate_run(frames_of(gts, "a"), frames_of(gts, "a"), Task::kStandard, 0.0, cfg);
  CHECK(*exact.classes[0].ap == doctest::Approx(1.0));
  CHECK(*exact.classes[1].ap == doctest::Approx(1.0));
  CHECK_FALSE(exact.classes[3].ap.has_value());
  CHECK(*exact.mean_ap == doctest::Approx(1.0));

  auto shifted = gts;
  for (auto& d : shifted) d.center.x() += 5.0;
  const EvalReport miss = evaluate_run(frames_of(shifted, "a"), frames_of(gts, "a"), Task::kStandard, 0.0, cfg);
  CHECK(*miss.mean_ap == 0.0);

  const EvalReport none = evaluate_run({}, frames_of(gts, "a"), Task::kStandard, 0.0, cfg);
  CHECK(*none.mean_ap == 0.0);
  CHECK(none.missing_detection_frames == std::vector<std::string>{"a"});

  const EvalReport extra = evaluate_run(frames_of(gts, "b"), frames_of(gts, "a"), Task::kStandard, 0.0, cfg);
  CHECK(extra.unexpected_detection_frames == std::vector<std::string>{"b"});
  CHECK(exact.to_json().at("mAP").get<double>() == doctest::Approx(1.0));
  CHECK(exact.to_table().find("mAP") != std::string::npos);
}

TEST_CASE("standard task drops GT without points") {
  auto g = box({10, 0, -1}, {4.5, 1.9, 1.6}, 0.0);
  g.num_points = 0;
  const EvalReport r = evaluate_run({}, frames_of({g}, "a"), Task::kStandard, 0.0, EvalConfig{});
  CHECK(r.classes[0].num_gt == 0);
  CHECK_FALSE(r.mean_ap.has_value());
}

TEST_CASE("predictive task on a static scene equals the standard task") {
  std::vector<DetectionBox> current, future;
  for (int i = 0; i < 4; ++i) {
    DetectionBox b = box({8.0 + 6 * i, 2.0 * i, -1}, {4.5, 1.9, 1.6}, 0.2 * i);
    b.num_points = 10;
    current.push_back(b);
    b.t_query = 0.5;
    b.horizon = 0.5;
    b.time_tag = TimeTag::kFuture;
    future.push_back(b);
  }
  std::vector<DetectionBox> gt = current;
  gt.insert(gt.end(), future.begin(), future.end());
  std::vector<DetectionBox> dets(current.begin(), current.begin() + 3);
  for (std::size_t i = 0; i < 3; ++i) {
    DetectionBox d = current[i];
    d.time_tag = TimeTag::kFuture;
    dets.push_back(d);
  }
  const EvalReport s = evaluate_run(frames_of(dets, "f"), frames_of(gt, "f"), Task::kStandard, 0.0, EvalConfig{});
  const EvalReport p = evaluate_run(frames_of(dets, "f"), frames_of(gt, "f"), Task::kPredictive, 0.5, EvalConfig{});
  CHECK(*s.classes[0].ap == doctest::Approx(0.75));
  CHECK(*p.classes[0].ap == *s.classes[0].ap);
  CHECK(p.classes[0].num_gt == 4);
  CHECK_THROWS_AS(evaluate_run({}, {}, Task::kPredictive, 0.0, EvalConfig{}), Error);
}

TEST_CASE("eval config validation") {
  EvalConfig cfg;
  cfg.iou_thresholds[2] = 0.0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.recall_positions = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  CHECK(task_from_name("predictive") == Task::kPredictive);
  CHECK_THROWS_AS(task_from_name("bev"), Error);
}
