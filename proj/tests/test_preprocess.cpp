#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pod4d/io.hpp"
#include "pod4d/preprocess.hpp"
#include "support.hpp"

using namespace pod4d;
using namespace pod4d::preprocess;

namespace {

sim::PointCloudFrame frame_of(const std::vector<sim::LidarPoint>& pts) {
  sim::PointCloudFrame f;
  f.points = pts;
  return f;
}

double median(std::vector<double> v) {
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
  return v[v.size() / 2];
}

CompensatedPoint moving(Vec3 p, double v_abs) {
  CompensatedPoint c;
  c.position = p;
  c.v_abs = v_abs;
  c.v_rel = v_abs;
  return c;
}

}  // namespace

TEST_CASE("ground extraction covers the plane on noiseless data") {
  sim::Scene s = test::empty_scene({10.0, 0.0});
  s.actors.push_back(test::actor(0, ObjectClass::kCar, {4.5, 1.9, 1.6}, 14.0, 1.0, 0.2, {8.0, 0.0}));
  const auto f = sim::scan_frame(s, 0.0, test::noiseless(), 3);
  const GroundResult g = extract_ground(f, GroundParams{});
  REQUIRE(g.sufficient);
  std::size_t plane = 0, hit = 0, car = 0, car_marked = 0;
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    if (f.source_ids[i] == sim::kGroundSource) {
      ++plane;
      hit += g.mask[i];
    } else {
      ++car;
      car_marked += g.mask[i];
    }
  }
  CHECK(static_cast<double>(hit) >= 0.95 * static_cast<double>(plane));
  CHECK(car > 0);
  CHECK(static_cast<double>(car_marked) < 0.2 * static_cast<double>(car));
  CHECK(g.normal.z() == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(-g.offset / g.normal.z() + 1.8) < 2e-3);
}

TEST_CASE("empty frame has insufficient ground evidence") {
  const GroundResult g = extract_ground(sim::PointCloudFrame{}, GroundParams{});
  CHECK(g.mask.empty());
  CHECK_FALSE(g.sufficient);
}

TEST_CASE("a single plane is all ground") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  std::vector<sim::LidarPoint> pts;
  for (int i = 0; i < 300; ++i) pts.push_back({u(rng) + 30.0, u(rng), -1.8, 0.3, 0.0});
  const GroundResult g = extract_ground(frame_of(pts), GroundParams{});
  CHECK(g.sufficient);
  CHECK(g.inliers == pts.size());
  CHECK(std::all_of(g.mask.begin(), g.mask.end(), [](std::uint8_t m) { return m == 1; }));
}

TEST_CASE("too few ground candidates is insufficient") {
  std::vector<sim::LidarPoint> pts;
  for (int i = 0; i < 20; ++i) pts.push_back({10.0 + i, 0.5 * i, -1.8, 0.3, 0.0});
  CHECK_FALSE(extract_ground(frame_of(pts), GroundParams{}).sufficient);
}

TEST_CASE("ground mean subtraction") {
  std::vector<sim::LidarPoint> pts = {{10, 0, -1.8, 0.2, -9.0}, {12, 1, -1.8, 0.2, -11.0}, {20, 0, 0.0, 0.5, -4.0}};
  const std::vector<std::uint8_t> mask{1, 1, 0};
  const CompensationResult r = compensate_velocity(frame_of(pts), mask);
  CHECK(r.ground_mean_v == doctest::Approx(-10.0));
  CHECK(r.points[2].v_abs == doctest::Approx(6.0));
  CHECK(r.points[2].v_rel == doctest::Approx(-4.0));
  CHECK_FALSE(r.degraded);
}

TEST_CASE("stationary ego leaves velocities unchanged") {
  std::vector<sim::LidarPoint> pts = {{10, 0, -1.8, 0.2, 0.0}, {12, 1, -1.8, 0.2, 0.0}, {20, 0, 0.0, 0.5, 3.5}};
  const CompensationResult r = compensate_velocity(frame_of(pts), std::vector<std::uint8_t>{1, 1, 0});
  for (std::size_t i = 0; i < pts.size(); ++i) CHECK(r.points[i].v_abs == r.points[i].v_rel);
}

TEST_CASE("empty ground mask degrades to zero compensation") {
  std::vector<sim::LidarPoint> pts = {{10, 0, 0.0, 0.2, -3.0}};
  const CompensationResult r = compensate_velocity(frame_of(pts), std::vector<std::uint8_t>{0});
  CHECK(r.degraded);
  CHECK(r.points[0].v_abs == -3.0);
  CHECK_THROWS_AS(compensate_velocity(frame_of(pts), std::vector<std::uint8_t>{1, 1}), Error);
}

TEST_CASE("straight drive: static residual is far below the raw velocity") {
  sim::SceneConfig cfg;
  cfg.classes = sim::SceneConfig::default_classes();
  cfg.ego_speed = 10.0;
  const sim::Scene s = sim::generate_scene(cfg, 8);
  const auto f = sim::scan_frame(s, 0.0, test::noiseless(), 8);
  const auto g = extract_ground(f, GroundParams{});
  const auto r = compensate_velocity(f, g.mask);
  std::vector<double> rel, abs;
  for (std::size_t i = 0; i < f.points.size(); ++i) {
    const int src = f.source_ids[i];
    if (src != sim::kGroundSource && s.actors[static_cast<std::size_t>(src)].velocity.norm() > 0.0) continue;
    rel.push_back(std::abs(r.points[i].v_rel));
    abs.push_back(std::abs(r.points[i].v_abs));
  }
  CHECK(median(abs) * 5.0 <= median(rel));
}

TEST_CASE("compensation ignores a constant velocity offset and point order") {
  sim::SceneConfig cfg;
  cfg.classes = sim::SceneConfig::default_classes();
  const sim::Scene s = sim::generate_scene(cfg, 12);
  auto f = sim::scan_frame(s, 0.0, sim::LidarModel{}, 12);
  const auto g = extract_ground(f, GroundParams{});
  const auto base = compensate_velocity(f, g.mask);

  auto shifted = f;
  for (auto& p : shifted.points) p.v += 3.25;
  const auto moved = compensate_velocity(shifted, g.mask);
  for (std::size_t i = 0; i < f.points.size(); ++i)
    CHECK(std::abs(moved.points[i].v_abs - base.points[i].v_abs) < 1e-9);

  std::vector<std::size_t> perm(f.points.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(1);
  std::shuffle(perm.begin(), perm.end(), rng);
  auto shuffled = f;
  std::vector<std::uint8_t> mask(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    shuffled.points[i] = f.points[perm[i]];
    mask[i] = g.mask[perm[i]];
  }
  const auto reordered = compensate_velocity(shuffled, mask);
  CHECK(reordered.ground_mean_v == doctest::Approx(base.ground_mean_v).epsilon(1e-12));
}

TEST_CASE("per-ray compensation with a known ego velocity zeroes static points") {
  sim::Scene s = test::empty_scene({12.0, 0.0});
  s.actors.push_back(test::actor(0, ObjectClass::kCar, {4.5, 1.9, 1.6}, 20.0, -3.0, 0.0, Vec2::Zero()));
  const auto f = sim::scan_frame(s, 0.0, test::noiseless(), 1);
  const auto g = extract_ground(f, GroundParams{});
  const auto given = compensate_velocity(f, g.mask, VelocityMethod::kPerRay, Vec3(12.0, 0.0, 0.0));
  for (const auto& p : given.points) CHECK(std::abs(p.v_abs) < 1e-9);
  const auto fitted = compensate_velocity(f, g.mask, VelocityMethod::kPerRay);
  CHECK(fitted.ego_velocity.x() == doctest::Approx(12.0).epsilon(1e-3));
}

TEST_CASE("virtual future points along the ray") {
  const Vec3 o = Vec3::Zero();
  const std::vector<CompensatedPoint> pts = {moving({10, 0, 0}, 6.0), moving({10, 0, 0}, -6.0), moving({3, 4, 0}, 0.0)};
  const TwoFramePoints tf = generate_virtual_future(pts, 0.5, o);
  REQUIRE(tf.records.size() == 6);
  CHECK(tf.size_per_frame() == 3);
  CHECK((tf.records[3].position - Vec3(13, 0, 0)).norm() < 1e-12);
  CHECK((tf.records[4].position - Vec3(7, 0, 0)).norm() < 1e-12);
  CHECK(tf.records[5].position == pts[2].position);
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(tf.records[k].t_label == 0);
    CHECK(tf.records[k + 3].t_label == 1);
    CHECK(tf.records[k].twin == static_cast<int>(k + 3));
    CHECK(tf.records[k + 3].twin == static_cast<int>(k));
    CHECK(tf.records[k + 3].intensity == tf.records[k].intensity);
    CHECK(tf.records[k + 3].v_abs == tf.records[k].v_abs);
  }
}

TEST_CASE("points at the sensor origin are dropped and counted") {
  const std::vector<CompensatedPoint> pts = {moving({0, 0, 0}, 1.0), moving({5, 0, 0}, 1.0)};
  const TwoFramePoints tf = generate_virtual_future(pts, 0.1, Vec3::Zero());
  CHECK(tf.dropped == 1);
  CHECK(tf.records.size() == 2);
  CHECK_THROWS_AS(generate_virtual_future(pts, 0.0, Vec3::Zero()), Error);
}

TEST_CASE("extrapolation composes along the ray") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50.0, 50.0), v(-20.0, 20.0), dt(0.01, 1.0);
  const Vec3 o{0.3, -0.2, 0.1};
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x{u(rng), u(rng), u(rng) / 10.0};
    const double va = v(rng), a = dt(rng), b = dt(rng);
    if (std::abs(va) * (a + b) >= (x - o).norm()) continue;
    const Vec3 two = extrapolate_along_ray(extrapolate_along_ray(x, o, va, a), o, va, b);
    const Vec3 one = extrapolate_along_ray(x, o, va, a + b);
    CHECK((two - one).norm() < 1e-9);
  }
}

TEST_CASE("two-frame dump writes seven floats per record") {
  const auto dir = test::scratch_dir("twoframe");
  const std::vector<CompensatedPoint> pts = {moving({10, 0, 0}, 2.0), moving({0, 5, 1}, -1.0)};
  const TwoFramePoints tf = generate_virtual_future(pts, 0.5, Vec3::Zero());
  write_two_frame(tf, dir / "tf.bin", -3.0, false);
  const auto blob = io::read_f32(dir / "tf.bin");
  REQUIRE(blob.size() == 4 * 7);
  CHECK(blob[2 * 7 + 0] == doctest::Approx(11.0));
  CHECK(blob[2 * 7 + 5] == 1.0f);
  const auto meta = io::read_json(io::sidecar_path(dir / "tf.bin"));
  CHECK(meta.at("delta_t").get<double>() == doctest::Approx(0.5));
  CHECK(meta.at("ground_mean_v").get<double>() == doctest::Approx(-3.0));
}
