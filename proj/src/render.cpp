#include "pod4d/render.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pod4d/eval.hpp"
#include "pod4d/io.hpp"
#include "pod4d/preprocess.hpp"

namespace pod4d::render {

Canvas::Canvas(const RenderConfig& cfg) : cfg_(cfg) {
  require(cfg.resolution > 0.0 && cfg.x_max > cfg.x_min && cfg.y_max > cfg.y_min, ErrorCode::kConfig,
          "render window is empty");
  width_ = static_cast<int>(std::ceil((cfg.y_max - cfg.y_min) / cfg.resolution));
  height_ = static_cast<int>(std::ceil((cfg.x_max - cfg.x_min) / cfg.resolution));
  pixels_.assign(static_cast<std::size_t>(width_) * height_, kBackground);
}

bool Canvas::to_pixel(double x, double y, int& col, int& row) const {
  const double c = std::floor((cfg_.y_max - y) / cfg_.resolution);
  const double r = std::floor((cfg_.x_max - x) / cfg_.resolution);
  if (c < 0 || r < 0 || c >= width_ || r >= height_) return false;
  col = static_cast<int>(c);
  row = static_cast<int>(r);
  return true;
}

void Canvas::set(int col, int row, Rgb c) {
  if (col < 0 || row < 0 || col >= width_ || row >= height_) return;
  pixels_[static_cast<std::size_t>(row) * width_ + col] = c;
}

Rgb Canvas::get(int col, int row) const {
  require(col >= 0 && row >= 0 && col < width_ && row < height_, ErrorCode::kInvalidArgument, "pixel out of range");
  return pixels_[static_cast<std::size_t>(row) * width_ + col];
}

void Canvas::line(const Vec2& a, const Vec2& b, Rgb c) {
  const double len = (b - a).norm();
  const int steps = std::max(1, static_cast<int>(std::ceil(len / (cfg_.resolution * 0.5))));
  for (int i = 0; i <= steps; ++i) {
    const Vec2 p = a + (b - a) * (static_cast<double>(i) / steps);
    int col = 0, row = 0;
    if (to_pixel(p.x(), p.y(), col, row)) set(col, row, c);
  }
}

void Canvas::draw_axes() {
  line({cfg_.x_min, 0.0}, {cfg_.x_max, 0.0}, kAxes);
  line({0.0, cfg_.y_min}, {0.0, cfg_.y_max}, kAxes);
  for (double x = std::ceil(cfg_.x_min / 10.0) * 10.0; x <= cfg_.x_max; x += 10.0) {
    line({x, -0.5}, {x, 0.5}, kAxes);
  }
}

void Canvas::draw_box(const DetectionBox& box, Rgb c) {
  const auto corners = eval::footprint(box);
  for (std::size_t i = 0; i < corners.size(); ++i) line(corners[i], corners[(i + 1) % corners.size()], c);
}

void Canvas::draw_points(std::span<const Vec3> points, std::span<const double> v_abs) {
  for (std::size_t i = 0; i < points.size(); ++i) {
    int col = 0, row = 0;
    if (!to_pixel(points[i].x(), points[i].y(), col, row)) continue;
    const double v = i < v_abs.size() ? v_abs[i] : 0.0;
    const double k = std::clamp(std::abs(v) / 10.0, 0.0, 1.0);
    const auto shade = static_cast<std::uint8_t>(110 + 100 * (1.0 - k));
    const auto strong = static_cast<std::uint8_t>(110 + 145 * k);
    if (std::abs(v) < 0.5) {
      set(col, row, {110, 110, 110});
    } else if (v > 0) {
      set(col, row, {strong, 60, shade});
    } else {
      set(col, row, {60, shade, strong});
    }
  }
}

void Canvas::write_ppm(const std::filesystem::path& path) const {
  std::string buf = "P6\n" + std::to_string(width_) + " " + std::to_string(height_) + "\n255\n";
  buf.reserve(buf.size() + pixels_.size() * 3);
  for (const Rgb& p : pixels_) {
    buf.push_back(static_cast<char>(p.r));
    buf.push_back(static_cast<char>(p.g));
    buf.push_back(static_cast<char>(p.b));
  }
  io::write_bytes_atomic(path, buf);
}

Canvas render_scene(const RenderInput& input, const RenderConfig& cfg) {
  Canvas canvas(cfg);
  canvas.draw_axes();
  canvas.draw_points(input.points, input.v_abs);
  for (const DetectionBox& b : input.ground_truth) {
    canvas.draw_box(b, b.t_query > b.t_ref ? kGroundTruthFuture : kGroundTruth);
  }
  for (const DetectionBox& b : input.predictions) {
    canvas.draw_box(b, b.time_tag == TimeTag::kFuture ? kPredictionFuture : kPrediction);
  }
  return canvas;
}

void render_files(const RunConfig& cfg, const std::filesystem::path& frame_bin,
                  const std::filesystem::path& predictions_jsonl, const std::filesystem::path& gt_jsonl,
                  const std::filesystem::path& out_image, double horizon) {
  RenderInput input;
  if (!frame_bin.empty()) {
    const sim::PointCloudFrame frame = io::read_frame(frame_bin);
    const auto ground = preprocess::extract_ground(frame, cfg.ground);
    const auto comp = preprocess::compensate_velocity(frame, ground.mask, cfg.velocity_method);
    for (const auto& p : comp.points) {
      if (p.is_ground) continue;
      input.points.push_back(p.position);
      input.v_abs.push_back(p.v_abs);
    }
  }
  if (!predictions_jsonl.empty()) input.predictions = io::read_boxes(predictions_jsonl);
  if (!gt_jsonl.empty()) {
    for (const DetectionBox& b : io::read_boxes(gt_jsonl)) {
      const double dt = b.t_query - b.t_ref;
      if (std::abs(dt) < 1e-6 || (horizon > 0 && std::abs(dt - horizon) < 1e-6)) input.ground_truth.push_back(b);
    }
  }
  render_scene(input, cfg.render).write_ppm(out_image);
}

}  // namespace pod4d::render
