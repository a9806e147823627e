#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "pod4d/tensor.hpp"
#include "pod4d/weights.hpp"

namespace pod4d::sparse4d {

struct ConvSpec4D {
  Shape4 kernel{3, 3, 3, 3};
  Shape4 stride{1, 1, 1, 1};
  Shape4 padding{1, 1, 1, 1};
  int in_channels = 1;
  int out_channels = 1;
  bool submanifold = true;

  void validate() const;
  int kernel_volume() const { return kernel[0] * kernel[1] * kernel[2] * kernel[3]; }
  // Strided: floor((n + 2p - k) / s) + 1 per axis. Submanifold: unchanged.
  Shape4 output_shape(const Shape4& input) const;
  // Linear offset id for per-axis kernel positions (x slowest, t fastest).
  int offset_id(const Shape4& k) const { return ((k[0] * kernel[1] + k[1]) * kernel[2] + k[2]) * kernel[3] + k[3]; }
  Shape4 offset_position(int id) const;
};

struct RuleEntry {
  std::int32_t offset;
  std::int32_t input;
};

// Gather/scatter plan for one convolution. Entries are grouped by output row
// and ordered by ascending kernel offset inside each row; that order is also the
// accumulation order of the forward pass.
struct Rulebook {
  std::vector<VoxelIndex> out_indices;
  Shape4 out_shape{1, 1, 1, 1};
  int kernel_volume = 0;
  std::vector<std::int64_t> row_begin;  // out_indices.size() + 1
  std::vector<RuleEntry> entries;

  std::size_t pair_count() const { return entries.size(); }
  // (input_row, output_row) pairs per kernel offset, sorted by input row.
  std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> pairs_by_offset() const;
};

Rulebook build_rulebook(std::span<const VoxelIndex> indices, const Shape4& spatial_shape, const ConvSpec4D& spec,
                        int threads = 1);

struct ConvWeights {
  std::vector<float> weight;  // (kernel volume, in, out)
  std::vector<float> bias;    // out, may be empty
};

SparseTensor4D sparse_conv4d(const SparseTensor4D& x, const ConvWeights& w, const ConvSpec4D& spec,
                             const Rulebook& rulebook, int threads = 1);

struct BatchNormParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> mean;
  std::vector<float> var;
  double eps = 1e-5;
};

// Inference-mode normalization followed by ReLU; indices are untouched.
SparseTensor4D batchnorm_relu(SparseTensor4D x, const BatchNormParams& p);

// One input block and four downsampling stages of (strided conv + 2 submanifold blocks).
struct BackboneConfig {
  int in_channels = 64;
  std::array<int, 5> widths{16, 32, 64, 128, 128};
  std::array<Shape4, 4> strides{{{2, 2, 2, 1}, {2, 2, 2, 1}, {1, 1, 2, 1}, {1, 1, 2, 1}}};
  int submanifold_blocks = 2;
  double bn_eps = 1e-5;

  void validate() const;
  Shape4 output_shape(const Shape4& input) const;
};

struct ConvBlock {
  std::string name;
  ConvSpec4D spec;
  ConvWeights weights;
  BatchNormParams bn;
};

std::vector<ParamSpec> spconv4d_param_specs(const BackboneConfig& cfg);
WeightBundle init_spconv4d_weights(const BackboneConfig& cfg, std::uint64_t seed);
// Blocks in execution order, with parameters pulled out of the bundle.
std::vector<ConvBlock> spconv4d_blocks(const WeightBundle& bundle, const BackboneConfig& cfg);

struct BackboneTrace {
  std::vector<Shape4> shapes;       // after each block
  std::vector<std::size_t> voxels;  // active sites after each block
};

SparseTensor4D spconv4d_backbone(const SparseTensor4D& x, const WeightBundle& bundle, const BackboneConfig& cfg,
                                 BackboneTrace* trace = nullptr, int threads = 1);

// Dense reference tensor, cell-major ((x * Ny + y) * Nz + z) * Nt + t, channels innermost.
struct DenseTensor4D {
  Shape4 shape{1, 1, 1, 1};
  int channels = 0;
  std::vector<double> data;

  std::size_t cells() const { return static_cast<std::size_t>(shape[0]) * shape[1] * shape[2] * shape[3]; }
  std::size_t cell(const VoxelIndex& i) const {
    return ((static_cast<std::size_t>(i.x) * shape[1] + i.y) * shape[2] + i.z) * shape[3] + i.t;
  }
  double& at(const VoxelIndex& i, int c) { return data[cell(i) * channels + c]; }
  double at(const VoxelIndex& i, int c) const { return data[cell(i) * channels + c]; }
};

inline constexpr std::size_t kDenseOracleMaxCells = 1'000'000;

DenseTensor4D to_dense(const SparseTensor4D& x);

// Direct convolution over every output cell: out[o] = b + sum_k W[k]^T in[o * s - p + k].
// Submanifold specs evaluate at stride 1 with centered kernels.
DenseTensor4D dense_oracle_conv4d(const DenseTensor4D& input, const ConvWeights& w, const ConvSpec4D& spec);

}  // namespace pod4d::sparse4d
