#include "pod4d/decode.hpp"

#include <absl/container/flat_hash_map.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace pod4d::decode {

std::array<ClassPrior, kNumClasses> default_priors() {
  return {{
      {ObjectClass::kCar, {4.5, 1.9, 1.6}},
      {ObjectClass::kPedestrian, {0.7, 0.7, 1.75}},
      {ObjectClass::kCyclist, {1.8, 0.7, 1.7}},
      {ObjectClass::kVan, {5.6, 2.1, 2.3}},
      {ObjectClass::kTrafficCone, {0.4, 0.4, 0.75}},
  }};
}

void DecodeParams::validate() const {
  require(cell_size > 0.0, ErrorCode::kConfig, "decode.cell_size must be > 0");
  require(connect_radius >= 0.0, ErrorCode::kConfig, "decode.connect_radius must be >= 0");
  require(moving_speed >= 0.0, ErrorCode::kConfig, "decode.moving_speed must be >= 0");
  require(moving_connect_radius >= 0.0, ErrorCode::kConfig, "decode.moving_connect_radius must be >= 0");
  require(velocity_gate >= 0.0, ErrorCode::kConfig, "decode.velocity_gate must be >= 0");
  require(min_heading_alignment > 0.0 && min_heading_alignment <= 1.0, ErrorCode::kConfig,
          "decode.min_heading_alignment must be in (0, 1]");
  require(min_points >= 1, ErrorCode::kConfig, "decode.min_points must be >= 1");
  require(score_cap > 0.0, ErrorCode::kConfig, "decode.score_cap must be > 0");
  require(min_extent > 0.0, ErrorCode::kConfig, "decode.min_extent must be > 0");
  require(std::abs(ground_normal.z()) > 1e-6, ErrorCode::kConfig, "ground plane must not be vertical");
  for (const ClassPrior& p : priors) {
    require((p.dims.array() > 0.0).all(), ErrorCode::kConfig, "class prior dims must be > 0");
  }
}

double DecodeParams::ground_height(double x, double y) const {
  return -(ground_offset + ground_normal.x() * x + ground_normal.y() * y) / ground_normal.z();
}

namespace {

struct DisjointSets {
  std::vector<std::size_t> parent;

  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
  std::size_t find(std::size_t a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

std::uint64_t cell_key(std::int64_t ix, std::int64_t iy) {
  return (static_cast<std::uint64_t>(ix + (std::int64_t{1} << 31)) << 32) |
         static_cast<std::uint64_t>(iy + (std::int64_t{1} << 31));
}

double cross(const Vec2& o, const Vec2& a, const Vec2& b) {
  return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
}

double half_turn_yaw(double yaw) {
  yaw = wrap_angle(yaw);
  if (yaw > std::numbers::pi / 2) yaw -= std::numbers::pi;
  if (yaw <= -std::numbers::pi / 2) yaw += std::numbers::pi;
  return yaw;
}

double sq(double v) { return v * v; }

}  // namespace

std::vector<Cluster> cluster_points(std::span<const Vec3> points, const DecodeParams& params,
                                    std::span<const double> velocities) {
  params.validate();
  require(velocities.empty() || velocities.size() == points.size(), ErrorCode::kShapeMismatch,
          "velocities must match points");
  if (points.empty()) return {};
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto ix = static_cast<std::int64_t>(std::floor(points[i].x() / params.cell_size));
    const auto iy = static_cast<std::int64_t>(std::floor(points[i].y() / params.cell_size));
    keyed[i] = {cell_key(ix, iy), i};
  }
  std::sort(keyed.begin(), keyed.end());

  std::vector<std::size_t> cell_begin;
  absl::flat_hash_map<std::uint64_t, std::size_t> cell_of;
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    if (i == 0 || keyed[i].first != keyed[i - 1].first) {
      cell_of.emplace(keyed[i].first, cell_begin.size());
      cell_begin.push_back(i);
    }
  }
  const std::size_t n_cells = cell_begin.size();
  cell_begin.push_back(keyed.size());

  std::vector<double> cell_v(n_cells, 0.0);
  std::vector<std::uint8_t> moving(n_cells, 0);
  if (!velocities.empty()) {
    for (std::size_t c = 0; c < n_cells; ++c) {
      double sum = 0.0;
      for (std::size_t k = cell_begin[c]; k < cell_begin[c + 1]; ++k) sum += velocities[keyed[k].second];
      cell_v[c] = sum / static_cast<double>(cell_begin[c + 1] - cell_begin[c]);
      moving[c] = std::abs(cell_v[c]) >= params.moving_speed;
    }
  }

  auto reach_of = [&](double radius) {
    return static_cast<std::int64_t>(std::floor(radius / params.cell_size + 1e-9)) + 1;
  };
  const std::int64_t reach = reach_of(params.connect_radius);
  const std::int64_t moving_reach = std::max(reach, reach_of(params.moving_connect_radius));
  DisjointSets sets(n_cells);
  for (std::size_t c = 0; c < n_cells; ++c) {
    const std::uint64_t key = keyed[cell_begin[c]].first;
    const auto ix = static_cast<std::int64_t>(key >> 32) - (std::int64_t{1} << 31);
    const auto iy = static_cast<std::int64_t>(key & 0xFFFFFFFFu) - (std::int64_t{1} << 31);
    const std::int64_t r = moving[c] ? moving_reach : reach;
    for (std::int64_t di = -r; di <= r; ++di) {
      for (std::int64_t dj = -r; dj <= r; ++dj) {
        if (di == 0 && dj == 0) continue;
        auto it = cell_of.find(cell_key(ix + di, iy + dj));
        if (it == cell_of.end()) continue;
        const std::size_t o = it->second;
        const bool near = std::abs(di) <= reach && std::abs(dj) <= reach;
        if (near || (moving[o] && std::abs(cell_v[c] - cell_v[o]) <= params.velocity_gate)) sets.unite(c, o);
      }
    }
  }

  std::vector<std::size_t> cluster_of_root(n_cells, std::numeric_limits<std::size_t>::max());
  std::vector<Cluster> clusters;
  for (std::size_t c = 0; c < n_cells; ++c) {
    const std::size_t root = sets.find(c);
    if (cluster_of_root[root] == std::numeric_limits<std::size_t>::max()) {
      cluster_of_root[root] = clusters.size();
      clusters.emplace_back();
    }
    Cluster& cl = clusters[cluster_of_root[root]];
    for (std::size_t k = cell_begin[c]; k < cell_begin[c + 1]; ++k) cl.members.push_back(keyed[k].second);
  }
  std::vector<Cluster> kept;
  for (Cluster& cl : clusters) {
    if (cl.members.size() < static_cast<std::size_t>(params.min_points)) continue;
    std::sort(cl.members.begin(), cl.members.end());
    kept.push_back(std::move(cl));
  }
  return kept;
}

std::vector<Cluster> segment_foreground(std::span<const preprocess::CompensatedPoint> points,
                                        const DecodeParams& params) {
  std::vector<Vec3> positions;
  std::vector<double> velocities;
  std::vector<std::size_t> source;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (points[i].is_ground) continue;
    positions.push_back(points[i].position);
    velocities.push_back(points[i].v_abs);
    source.push_back(i);
  }
  std::vector<Cluster> clusters = cluster_points(positions, params, velocities);
  for (Cluster& cl : clusters) {
    for (std::size_t& m : cl.members) m = source[m];
  }
  return clusters;
}

std::vector<Vec2> convex_hull(std::vector<Vec2> points) {
  std::sort(points.begin(), points.end(),
            [](const Vec2& a, const Vec2& b) { return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y()); });
  points.erase(std::unique(points.begin(), points.end()), points.end());
  if (points.size() < 3) return points;
  std::vector<Vec2> hull(2 * points.size());
  std::size_t k = 0;
  for (const Vec2& p : points) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0.0) --k;
    hull[k++] = p;
  }
  for (std::size_t i = points.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], points[i]) <= 0.0) --k;
    hull[k++] = points[i];
  }
  hull.resize(k - 1);
  return hull;
}

Rectangle min_area_rectangle(std::span<const Vec2> points, double min_extent) {
  require(!points.empty(), ErrorCode::kInvalidArgument, "cannot fit a rectangle to zero points");
  const std::vector<Vec2> hull = convex_hull({points.begin(), points.end()});
  Rectangle r;
  if (hull.size() == 1) {
    r.center = hull[0];
    r.length = r.width = min_extent;
    return r;
  }
  if (hull.size() == 2) {
    const Vec2 d = hull[1] - hull[0];
    r.center = (hull[0] + hull[1]) / 2.0;
    r.length = std::max(d.norm(), min_extent);
    r.width = min_extent;
    r.yaw = half_turn_yaw(std::atan2(d.y(), d.x()));
    return r;
  }
  double best_area = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2 e = (hull[(i + 1) % hull.size()] - hull[i]).normalized();
    const Vec2 n{-e.y(), e.x()};
    double umin = std::numeric_limits<double>::infinity(), umax = -umin, vmin = umin, vmax = -umin;
    for (const Vec2& p : hull) {
      umin = std::min(umin, p.dot(e));
      umax = std::max(umax, p.dot(e));
      vmin = std::min(vmin, p.dot(n));
      vmax = std::max(vmax, p.dot(n));
    }
    const double du = umax - umin, dv = vmax - vmin;
    if (du * dv < best_area - 1e-12) {
      best_area = du * dv;
      r.center = e * (umin + umax) / 2.0 + n * (vmin + vmax) / 2.0;
      const Vec2 axis = du >= dv ? e : n;
      r.length = std::max(du, dv);
      r.width = std::min(du, dv);
      r.yaw = half_turn_yaw(std::atan2(axis.y(), axis.x()));
    }
  }
  r.length = std::max(r.length, min_extent);
  r.width = std::max(r.width, min_extent);
  return r;
}

Rectangle closeness_rectangle(std::span<const Vec2> points, double min_extent) {
  require(!points.empty(), ErrorCode::kInvalidArgument, "cannot fit a rectangle to zero points");
  constexpr double kFloor = 0.05;
  auto extents = [&](double theta, double& umin, double& umax, double& vmin, double& vmax) {
    const Vec2 e{std::cos(theta), std::sin(theta)};
    const Vec2 n{-e.y(), e.x()};
    umin = vmin = std::numeric_limits<double>::infinity();
    umax = vmax = -umin;
    for (const Vec2& p : points) {
      umin = std::min(umin, p.dot(e));
      umax = std::max(umax, p.dot(e));
      vmin = std::min(vmin, p.dot(n));
      vmax = std::max(vmax, p.dot(n));
    }
  };
  auto score = [&](double theta) {
    double umin = 0, umax = 0, vmin = 0, vmax = 0;
    extents(theta, umin, umax, vmin, vmax);
    const Vec2 e{std::cos(theta), std::sin(theta)};
    const Vec2 n{-e.y(), e.x()};
    double s = 0.0;
    for (const Vec2& p : points) {
      const double u = p.dot(e), v = p.dot(n);
      const double d = std::min(std::min(u - umin, umax - u), std::min(v - vmin, vmax - v));
      s += 1.0 / std::max(d, kFloor);
    }
    return s;
  };
  const double quarter = std::numbers::pi / 2;
  double best = 0.0, best_score = -1.0;
  auto consider = [&](double theta) {
    const double sc = score(theta);
    if (sc > best_score * (1.0 + 1e-12)) {
      best_score = sc;
      best = theta;
    }
  };
  constexpr int kCoarse = 180;
  for (int i = 0; i < kCoarse; ++i) consider(quarter * i / kCoarse);
  const double coarse = best;
  constexpr int kFine = 10;
  for (int i = -kFine; i <= kFine; ++i) consider(coarse + quarter / kCoarse * i / kFine);

  double umin = 0, umax = 0, vmin = 0, vmax = 0;
  extents(best, umin, umax, vmin, vmax);
  const Vec2 e{std::cos(best), std::sin(best)};
  const Vec2 n{-e.y(), e.x()};
  const double du = umax - umin, dv = vmax - vmin;
  Rectangle r;
  r.center = e * (umin + umax) / 2.0 + n * (vmin + vmax) / 2.0;
  const Vec2 axis = du >= dv ? e : n;
  r.length = std::max(std::max(du, dv), min_extent);
  r.width = std::max(std::min(du, dv), min_extent);
  r.yaw = half_turn_yaw(std::atan2(axis.y(), axis.x()));
  return r;
}

ClassMatch classify(const Vec3& observed_dims, const DecodeParams& params) {
  const double l = std::max(observed_dims.x(), observed_dims.y());
  const double w = std::min(observed_dims.x(), observed_dims.y());
  const double h = observed_dims.z();
  ClassMatch best;
  best.distance = std::numeric_limits<double>::infinity();
  for (const ClassPrior& p : params.priors) {
    for (bool end_on : {false, true}) {
      const double matched = end_on ? p.dims.y() : p.dims.x();
      const double other = end_on ? p.dims.x() : p.dims.y();
      const double d =
          sq(std::log(l / matched)) + sq(std::max(0.0, std::log(w / other))) + sq(std::log(h / p.dims.z()));
      if (d < best.distance) best = {p.cls, end_on, d};
    }
  }
  return best;
}

DetectionBox fit_box(std::span<const Vec3> points, const DecodeParams& params) {
  require(!points.empty(), ErrorCode::kInvalidArgument, "cannot fit a box to zero points");
  std::vector<Vec2> xy(points.size());
  double top = -std::numeric_limits<double>::infinity(), low = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    xy[i] = points[i].head<2>();
    top = std::max(top, points[i].z());
    low = std::min(low, points[i].z());
  }
  const Rectangle rect = closeness_rectangle(xy, params.min_extent);
  const double bottom = std::min(low, params.ground_height(rect.center.x(), rect.center.y()));
  const double height = std::max(top - bottom, params.min_extent);

  DetectionBox box;
  box.center = {rect.center.x(), rect.center.y(), bottom + height / 2.0};
  box.dims = {rect.length, rect.width, height};
  box.yaw = rect.yaw;
  box.cls = classify(box.dims, params).cls;
  box.score = std::min(1.0, static_cast<double>(points.size()) / params.score_cap);
  box.num_points = static_cast<int>(points.size());
  return box;
}

DetectionBox complete_to_prior(const DetectionBox& box, const Vec3& sensor_origin, const DecodeParams& params) {
  const ClassMatch match = classify(box.dims, params);
  const auto& prior = *std::find_if(params.priors.begin(), params.priors.end(),
                                    [&](const ClassPrior& p) { return p.cls == match.cls; });
  DetectionBox out = box;
  out.cls = match.cls;
  const Vec2 u{std::cos(box.yaw), std::sin(box.yaw)};
  const Vec2 v{-u.y(), u.x()};
  const Vec2 to_sensor = sensor_origin.head<2>() - box.center.head<2>();
  const double target_u = match.end_on ? prior.dims.y() : prior.dims.x();
  const double target_v = match.end_on ? prior.dims.x() : prior.dims.y();

  Vec2 center = box.center.head<2>();
  auto grow = [&](const Vec2& axis, double& extent, double target) {
    if (extent >= target) return;
    const double away = to_sensor.dot(axis) < 0.0 ? 1.0 : -1.0;
    center += axis * away * (target - extent) / 2.0;
    extent = target;
  };
  double len = box.dims.x(), wid = box.dims.y();
  grow(u, len, target_u);
  grow(v, wid, target_v);
  out.center.head<2>() = center;
  if (box.dims.z() < prior.dims.z()) {
    out.center.z() += (prior.dims.z() - box.dims.z()) / 2.0;
    out.dims.z() = prior.dims.z();
  }
  if (wid > len) {
    std::swap(wid, len);
    out.yaw = half_turn_yaw(box.yaw + std::numbers::pi / 2);
  }
  out.dims.x() = len;
  out.dims.y() = wid;
  return out;
}

namespace {

bool has_support(const Cluster& cl, std::span<const Vec3> points, const bevmap::BevMap& support) {
  return std::any_of(cl.members.begin(), cl.members.end(), [&](std::size_t m) {
    int iy = 0, ix = 0;
    return support.locate(points[m].x(), points[m].y(), iy, ix) && support.occupancy[support.cell(iy, ix)];
  });
}

}  // namespace

std::vector<DetectionBox> decode_points(std::span<const Vec3> points, const Vec3& sensor_origin,
                                        const DecodeParams& params, const bevmap::BevMap* support,
                                        std::size_t* unsupported, std::span<const double> velocities) {
  std::vector<DetectionBox> boxes;
  std::vector<Vec3> members;
  for (const Cluster& cl : cluster_points(points, params, velocities)) {
    if (support && !has_support(cl, points, *support)) {
      if (unsupported) ++*unsupported;
      continue;
    }
    members.clear();
    for (std::size_t m : cl.members) members.push_back(points[m]);
    DetectionBox box = fit_box(members, params);
    if (box.dims.z() < params.min_height) continue;
    if (params.complete_to_prior) box = complete_to_prior(box, sensor_origin, params);
    boxes.push_back(box);
  }
  return boxes;
}

std::vector<DetectionBox> decode_rigid_future(std::span<const Vec3> future, std::span<const Vec3> twins,
                                              const Vec3& sensor_origin, const DecodeParams& params,
                                              const bevmap::BevMap* support, std::size_t* unsupported,
                                              std::span<const double> velocities) {
  require(twins.size() == future.size(), ErrorCode::kShapeMismatch, "every future point needs its twin");
  std::vector<DetectionBox> boxes;
  std::vector<Vec3> members;
  for (const Cluster& cl : cluster_points(future, params, velocities)) {
    if (support && !has_support(cl, future, *support)) {
      if (unsupported) ++*unsupported;
      continue;
    }
    members.clear();
    for (std::size_t m : cl.members) members.push_back(twins[m]);
    DetectionBox box = fit_box(members, params);
    if (box.dims.z() < params.min_height) continue;
    if (params.complete_to_prior) box = complete_to_prior(box, sensor_origin, params);

    // Radial displacements constrain the speed along the heading: d_i = s * (h . r_i).
    const Vec2 heading{std::cos(box.yaw), std::sin(box.yaw)};
    Vec2 mean_shift = Vec2::Zero();
    double num = 0.0, den = 0.0;
    for (std::size_t m : cl.members) {
      const Vec2 d = (future[m] - twins[m]).head<2>();
      mean_shift += d;
      const Vec2 ray = twins[m].head<2>() - sensor_origin.head<2>();
      if (ray.norm() < preprocess::kMinRayLength) continue;
      const double c = heading.dot(ray.normalized());
      num += c * d.dot(ray.normalized());
      den += c * c;
    }
    mean_shift /= static_cast<double>(cl.members.size());
    const bool observable = den >= params.min_heading_alignment * static_cast<double>(cl.members.size());
    box.center.head<2>() += params.motion_along_heading && observable ? Vec2(heading * (num / den)) : mean_shift;
    boxes.push_back(box);
  }
  return boxes;
}

DecodeResult decode_frame(const preprocess::TwoFramePoints& points, const DecodeParams& params,
                          const FrameContext& context) {
  std::array<std::vector<Vec3>, 2> slices;
  std::array<std::vector<double>, 2> velocities;
  std::vector<Vec3> twins;
  bool twinned = true;
  for (const preprocess::TimedPoint& p : points.records) {
    if (p.is_ground) continue;
    require(p.t_label == 0 || p.t_label == 1, ErrorCode::kInvalidArgument, "t_label must be 0 or 1");
    slices[static_cast<std::size_t>(p.t_label)].push_back(p.position);
    velocities[static_cast<std::size_t>(p.t_label)].push_back(p.v_abs);
    if (p.t_label == 1) {
      const bool ok = p.twin >= 0 && static_cast<std::size_t>(p.twin) < points.records.size() &&
                      points.records[static_cast<std::size_t>(p.twin)].t_label == 0;
      twinned = twinned && ok;
      twins.push_back(ok ? points.records[static_cast<std::size_t>(p.twin)].position : p.position);
    }
  }
  DecodeResult result;
  result.current = decode_points(slices[0], points.sensor_origin, params, context.support_current, &result.unsupported,
                                 velocities[0]);
  result.future = params.rigid_future && twinned
                      ? decode_rigid_future(slices[1], twins, points.sensor_origin, params, context.support_future,
                                            &result.unsupported, velocities[1])
                      : decode_points(slices[1], points.sensor_origin, params, context.support_future,
                                      &result.unsupported, velocities[1]);
  for (int t = 0; t < 2; ++t) {
    for (DetectionBox& b : t == 0 ? result.current : result.future) {
      b.frame_ref = context.frame_id;
      b.t_ref = context.t_ref;
      b.time_tag = t == 0 ? TimeTag::kCurrent : TimeTag::kFuture;
      b.horizon = t == 0 ? 0.0 : points.delta_t;
      b.t_query = context.t_ref + b.horizon;
    }
  }
  return result;
}

}  // namespace pod4d::decode
