#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "pod4d/tensor.hpp"
#include "pod4d/weights.hpp"

namespace pod4d::window4d {

using Coord4 = std::array<std::int32_t, 4>;

struct WindowConfig {
  Shape4 window_shape{60, 60, 1, 2};
  std::vector<Shape4> shifts{{0, 0, 0, 0}, {30, 30, 0, 0}};
  int set_capacity = 120;
  // Splits every window into factor[a] sub-windows along axis a; all-ones is a no-op.
  Shape4 hybrid_factor{1, 1, 1, 1};

  void validate() const;
  Shape4 effective_shape() const;
};

struct WindowAssignment {
  std::vector<Coord4> window;  // per voxel
  std::vector<Coord4> inner;   // per voxel, in [0, effective_shape)
};

// window = floor((index + shift) / shape), inner = (index + shift) mod shape.
WindowAssignment assign_windows(std::span<const VoxelIndex> indices, const WindowConfig& cfg, const Shape4& shift);

enum class SortAxis { kX, kY };

struct VoxelSet {
  std::vector<std::int32_t> slots;  // set_capacity entries; -1 marks a padded slot
  std::vector<std::uint8_t> mask;   // 1 = valid
  Coord4 window{};
  SortAxis axis = SortAxis::kX;
  int valid = 0;
};

struct SetPartition {
  int capacity = 0;
  std::vector<VoxelSet> sets;

  std::size_t valid_slots() const;
};

// Windows in lexicographic order; inside a window voxels are ordered by the
// sort axis first, then the remaining axes, and cut into capacity-sized chunks.
SetPartition partition_sets(const WindowAssignment& assignment, const WindowConfig& cfg, SortAxis axis);

// Additive factorized encoding: one table per axis, rows indexed by the inner coordinate.
struct PositionalTables {
  int channels = 0;
  std::array<std::vector<float>, 4> tables;  // tables[a] is effective_shape[a] x channels

  static PositionalTables zeros(const Shape4& shape, int channels);
};

std::vector<float> positional_encoding(std::span<const Coord4> inner, const PositionalTables& tables);

// Multi-head attention over one set followed by a feed-forward layer:
//   y = (residual ? x : 0) + Wo * MHA(q = k = x + pos, v = x)
//   z = y + W2 * relu(W1 * y + b1) + b2
// All matrices are stored in x out row-major, applied as row-vector products.
struct AttentionParams {
  int channels = 0;
  int heads = 1;
  int ffn_channels = 0;
  std::vector<float> q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
  std::vector<float> ffn1_w, ffn1_b, ffn2_w, ffn2_b;
  bool attn_residual = true;

  void validate() const;
  static AttentionParams identity(int channels, int heads, int ffn_channels);
};

struct AttentionOptions {
  // Nonzero: padded slots are filled with pseudo-random garbage instead of zeros.
  std::uint64_t padding_noise_seed = 0;
  int threads = 1;
};

// Masked softmax over `logits`; masked entries get probability zero.
void masked_softmax(std::span<const float> logits, std::span<const std::uint8_t> mask, std::span<float> probs);

// Forward pass for one padded set: `slots` and `pos` are capacity x channels.
// Only rows with mask = 1 are written to `out`.
void attend_padded_set(std::span<const float> slots, std::span<const float> pos, std::span<const std::uint8_t> mask,
                       const AttentionParams& params, std::span<float> out);

// features: N x C; pos: N x C or empty. Returns N x C.
std::vector<float> set_attention(std::span<const float> features, std::span<const float> pos,
                                 const SetPartition& partition, const AttentionParams& params,
                                 const AttentionOptions& options = {});

struct Dsvt4dLayer {
  AttentionParams attention;
  PositionalTables positional;
};

struct Dsvt4dConfig {
  int channels = 64;
  int heads = 8;
  int ffn_channels = 128;
  int layers = 2;
};

std::vector<ParamSpec> dsvt4d_param_specs(const Dsvt4dConfig& cfg, const WindowConfig& window);
WeightBundle init_dsvt4d_weights(const Dsvt4dConfig& cfg, const WindowConfig& window, std::uint64_t seed);
std::vector<Dsvt4dLayer> dsvt4d_layers(const WeightBundle& bundle, const Dsvt4dConfig& cfg, const WindowConfig& window);

// Layer l uses shifts[l % shifts.size()] and sorts along x for even l, y for odd l.
SparseTensor4D dsvt4d_block(const SparseTensor4D& x, std::span<const Dsvt4dLayer> layers, const WindowConfig& cfg,
                            int threads = 1);

// Merges voxels that differ only along the pooled axes (max per channel); pooled extents become 1.
SparseTensor4D pool_4d(const SparseTensor4D& x, bool pool_z, bool pool_t);

}  // namespace pod4d::window4d
