#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pod4d/box.hpp"
#include "pod4d/config.hpp"

namespace pod4d::render {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

inline constexpr Rgb kBackground{255, 255, 255};
inline constexpr Rgb kAxes{150, 150, 150};
inline constexpr Rgb kPrediction{0, 70, 255};
inline constexpr Rgb kPredictionFuture{0, 190, 255};
inline constexpr Rgb kGroundTruth{230, 20, 20};
inline constexpr Rgb kGroundTruthFuture{255, 140, 0};

// Top-down raster: +x (forward) points up the image, +y points left.
class Canvas {
 public:
  explicit Canvas(const RenderConfig& cfg);

  int width() const { return width_; }
  int height() const { return height_; }
  bool to_pixel(double x, double y, int& col, int& row) const;
  void set(int col, int row, Rgb c);
  Rgb get(int col, int row) const;

  void line(const Vec2& a, const Vec2& b, Rgb c);
  void draw_axes();
  void draw_box(const DetectionBox& box, Rgb c);
  // Static points gray; receding points tinted red, approaching tinted blue.
  void draw_points(std::span<const Vec3> points, std::span<const double> v_abs);

  void write_ppm(const std::filesystem::path& path) const;

 private:
  RenderConfig cfg_;
  int width_ = 0;
  int height_ = 0;
  std::vector<Rgb> pixels_;
};

struct RenderInput {
  std::vector<Vec3> points;
  std::vector<double> v_abs;
  std::vector<DetectionBox> predictions;
  std::vector<DetectionBox> ground_truth;
};

Canvas render_scene(const RenderInput& input, const RenderConfig& cfg);

// Loads a frame, compensates velocities for coloring, overlays boxes and writes a PPM.
// Ground truth is limited to t_query == t_ref and, when horizon > 0, that horizon.
void render_files(const RunConfig& cfg, const std::filesystem::path& frame_bin,
                  const std::filesystem::path& predictions_jsonl, const std::filesystem::path& gt_jsonl,
                  const std::filesystem::path& out_image, double horizon);

}  // namespace pod4d::render
