#pragma once

#include <array>
#include <string>
#include <vector>

#include "pod4d/preprocess.hpp"
#include "pod4d/tensor.hpp"

namespace pod4d::voxelizer {

// Per-point channels fed to the voxel feature encoder.
enum class ChannelMode { kXyz, kXyzi, kXyziRelv, kXyziAbsv };

const char* channel_mode_name(ChannelMode m);
ChannelMode channel_mode_from_name(const std::string& name);
int channel_mode_width(ChannelMode m);

struct VoxelGridConfig {
  std::array<double, 3> voxel_size{0.08, 0.08, 0.25};
  Shape4 grid_shape{1888, 1280, 64, 2};
  std::array<double, 3> origin{0.0, -51.2, -3.0};
  ChannelMode channel_mode = ChannelMode::kXyziAbsv;
  int count_cap = 32;

  void validate() const;
  // mode channels + mean offset from voxel center (3) + normalized count (1)
  int feature_channels() const { return channel_mode_width(channel_mode) + 4; }

  static VoxelGridConfig spconv4d_default();
  static VoxelGridConfig pillar_default();
};

struct Voxel4DSet {
  SparseTensor4D tensor;
  std::vector<int> point_counts;
  std::size_t points_in = 0;
  std::size_t points_dropped = 0;
};

Voxel4DSet voxelize_4d(const preprocess::TwoFramePoints& points, const VoxelGridConfig& cfg);

// Dense affine map followed by a rectifier: y = max(0, x W + b); W is in x out row-major.
struct LinearParams {
  int in_channels = 0;
  int out_channels = 0;
  std::vector<float> weight;
  std::vector<float> bias;
};

SparseTensor4D project_features(const SparseTensor4D& x, const LinearParams& params);

}  // namespace pod4d::voxelizer
