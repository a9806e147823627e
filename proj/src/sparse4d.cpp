#include "pod4d/sparse4d.hpp"

#include <absl/container/flat_hash_map.h>

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "pod4d/parallel.hpp"

namespace pod4d::sparse4d {

namespace {

using SiteMap = absl::flat_hash_map<std::uint64_t, std::int32_t>;

constexpr std::size_t kConvTileRows = 256;

SiteMap index_sites(std::span<const VoxelIndex> indices) {
  SiteMap map;
  map.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) map.emplace(indices[i].pack(), static_cast<std::int32_t>(i));
  return map;
}

std::vector<Shape4> enumerate_offsets(const ConvSpec4D& spec) {
  std::vector<Shape4> out(static_cast<std::size_t>(spec.kernel_volume()));
  for (int id = 0; id < spec.kernel_volume(); ++id) out[static_cast<std::size_t>(id)] = spec.offset_position(id);
  return out;
}

// Fills the CSR rule table by asking, for every output row, which input site
// each kernel offset reads. `source` maps (output index, kernel position) to the
// input coordinate, returning false when it falls outside the grid.
template <class SourceFn>
void fill_rules(Rulebook& rb, const SiteMap& sites, const std::vector<Shape4>& offsets, int threads,
                SourceFn&& source) {
  const std::size_t n_out = rb.out_indices.size();
  const std::size_t chunks = static_cast<std::size_t>(std::max(1, threads));
  const std::size_t chunk = (n_out + chunks - 1) / std::max<std::size_t>(chunks, 1);
  std::vector<std::vector<RuleEntry>> chunk_entries(chunks);
  rb.row_begin.assign(n_out + 1, 0);

  parallel_for(chunks, threads, [&](std::size_t c_begin, std::size_t c_end) {
    for (std::size_t c = c_begin; c < c_end; ++c) {
      const std::size_t begin = c * chunk;
      const std::size_t end = std::min(n_out, begin + chunk);
      auto& local = chunk_entries[c];
      for (std::size_t j = begin; j < end; ++j) {
        const VoxelIndex& o = rb.out_indices[j];
        std::int64_t count = 0;
        for (std::size_t k = 0; k < offsets.size(); ++k) {
          VoxelIndex in;
          if (!source(o, offsets[k], in)) continue;
          auto it = sites.find(in.pack());
          if (it == sites.end()) continue;
          local.push_back({static_cast<std::int32_t>(k), it->second});
          ++count;
        }
        rb.row_begin[j + 1] = count;
      }
    }
  });

  for (std::size_t j = 0; j < n_out; ++j) rb.row_begin[j + 1] += rb.row_begin[j];
  rb.entries.reserve(static_cast<std::size_t>(rb.row_begin[n_out]));
  for (auto& local : chunk_entries) rb.entries.insert(rb.entries.end(), local.begin(), local.end());
}

std::vector<float> normal_values(std::mt19937_64& rng, std::size_t n, double stddev) {
  std::normal_distribution<float> dist(0.0f, static_cast<float>(stddev));
  std::vector<float> v(n);
  for (float& x : v) x = dist(rng);
  return v;
}

}  // namespace

void ConvSpec4D::validate() const {
  for (int a = 0; a < 4; ++a) {
    require(kernel[a] >= 1, ErrorCode::kInvalidArgument, "kernel extents must be >= 1");
    require(stride[a] >= 1, ErrorCode::kInvalidArgument, "strides must be >= 1");
    require(padding[a] >= 0, ErrorCode::kInvalidArgument, "padding must be >= 0");
    if (submanifold) {
      require(kernel[a] % 2 == 1, ErrorCode::kInvalidArgument, "submanifold kernels must be odd");
      require(stride[a] == 1, ErrorCode::kInvalidArgument, "submanifold convolution requires unit stride");
    }
  }
  require(in_channels >= 1 && out_channels >= 1, ErrorCode::kInvalidArgument, "channel counts must be >= 1");
}

Shape4 ConvSpec4D::output_shape(const Shape4& input) const {
  if (submanifold) return input;
  Shape4 out{};
  for (int a = 0; a < 4; ++a) {
    const int span = input[a] + 2 * padding[a] - kernel[a];
    require(span >= 0, ErrorCode::kShapeMismatch, "kernel larger than padded input along axis " + std::to_string(a));
    out[a] = span / stride[a] + 1;
  }
  return out;
}

Shape4 ConvSpec4D::offset_position(int id) const {
  Shape4 k{};
  for (int a = 3; a >= 0; --a) {
    k[a] = id % kernel[a];
    id /= kernel[a];
  }
  return k;
}

std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> Rulebook::pairs_by_offset() const {
  std::vector<std::vector<std::pair<std::int32_t, std::int32_t>>> out(static_cast<std::size_t>(kernel_volume));
  for (std::size_t j = 0; j + 1 < row_begin.size(); ++j) {
    for (auto e = row_begin[j]; e < row_begin[j + 1]; ++e) {
      const RuleEntry& r = entries[static_cast<std::size_t>(e)];
      out[static_cast<std::size_t>(r.offset)].emplace_back(r.input, static_cast<std::int32_t>(j));
    }
  }
  for (auto& list : out) std::sort(list.begin(), list.end());
  return out;
}

Rulebook build_rulebook(std::span<const VoxelIndex> indices, const Shape4& spatial_shape, const ConvSpec4D& spec,
                        int threads) {
  spec.validate();
  validate_shape(spatial_shape);
  require(is_canonical(indices), ErrorCode::kInvalidArgument, "rulebook input indices are not canonical");
  Rulebook rb;
  rb.kernel_volume = spec.kernel_volume();
  rb.out_shape = spec.output_shape(spatial_shape);
  validate_shape(rb.out_shape);
  const SiteMap sites = index_sites(indices);
  const std::vector<Shape4> offsets = enumerate_offsets(spec);

  if (spec.submanifold) {
    rb.out_indices.assign(indices.begin(), indices.end());
    fill_rules(rb, sites, offsets, threads, [&](const VoxelIndex& o, const Shape4& k, VoxelIndex& in) {
      for (int a = 0; a < 4; ++a) {
        in[a] = o[a] + k[a] - spec.kernel[a] / 2;
        if (in[a] < 0 || in[a] >= spatial_shape[a]) return false;
      }
      return true;
    });
    return rb;
  }

  // Active outputs: o with o * s = i + p - k for some active input i and kernel position k.
  std::vector<std::uint64_t> keys;
  keys.reserve(indices.size() * 4);
  for (const VoxelIndex& i : indices) {
    for (const Shape4& k : offsets) {
      VoxelIndex o;
      bool ok = true;
      for (int a = 0; a < 4 && ok; ++a) {
        const int num = i[a] + spec.padding[a] - k[a];
        if (num < 0 || num % spec.stride[a] != 0) {
          ok = false;
        } else {
          o[a] = num / spec.stride[a];
          ok = o[a] < rb.out_shape[a];
        }
      }
      if (ok) keys.push_back(o.pack());
    }
  }
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  rb.out_indices.reserve(keys.size());
  for (std::uint64_t key : keys) rb.out_indices.push_back(VoxelIndex::unpack(key));

  fill_rules(rb, sites, offsets, threads, [&](const VoxelIndex& o, const Shape4& k, VoxelIndex& in) {
    for (int a = 0; a < 4; ++a) {
      in[a] = o[a] * spec.stride[a] - spec.padding[a] + k[a];
      if (in[a] < 0 || in[a] >= spatial_shape[a]) return false;
    }
    return true;
  });
  return rb;
}

SparseTensor4D sparse_conv4d(const SparseTensor4D& x, const ConvWeights& w, const ConvSpec4D& spec,
                             const Rulebook& rulebook, int threads) {
  spec.validate();
  require(x.channels == spec.in_channels, ErrorCode::kShapeMismatch,
          "conv expects " + std::to_string(spec.in_channels) + " input channels, got " + std::to_string(x.channels));
  const auto cin = static_cast<std::size_t>(spec.in_channels);
  const auto cout = static_cast<std::size_t>(spec.out_channels);
  require(w.weight.size() == static_cast<std::size_t>(spec.kernel_volume()) * cin * cout, ErrorCode::kShapeMismatch,
          "conv weight shape does not match (kernel volume, in, out)");
  require(w.bias.empty() || w.bias.size() == cout, ErrorCode::kShapeMismatch, "conv bias length mismatch");
  require(
      rulebook.kernel_volume == spec.kernel_volume() && rulebook.row_begin.size() == rulebook.out_indices.size() + 1,
      ErrorCode::kInvalidArgument, "rulebook was not built for this convolution");

  SparseTensor4D y;
  y.indices = rulebook.out_indices;
  y.spatial_shape = rulebook.out_shape;
  y.channels = spec.out_channels;
  y.features.assign(y.indices.size() * cout, 0.0f);

  // Output rows are processed in fixed tiles so the result does not depend on the
  // thread count. Inside a tile each kernel offset becomes one gather-GEMM-scatter,
  // and offsets are applied in ascending order.
  using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const std::size_t n_out = y.indices.size();
  const std::size_t tiles = (n_out + kConvTileRows - 1) / kConvTileRows;
  const auto volume = static_cast<std::size_t>(spec.kernel_volume());
  parallel_for(tiles, threads, [&](std::size_t tile_begin, std::size_t tile_end) {
    std::vector<std::int64_t> bucket_begin(volume + 1);
    std::vector<std::pair<std::int32_t, std::int32_t>> bucket;
    RowMat gathered;
    RowMat product;
    for (std::size_t tile = tile_begin; tile < tile_end; ++tile) {
      const std::size_t row0 = tile * kConvTileRows;
      const std::size_t row1 = std::min(n_out, row0 + kConvTileRows);
      const auto e0 = rulebook.row_begin[row0];
      const auto e1 = rulebook.row_begin[row1];
      std::fill(bucket_begin.begin(), bucket_begin.end(), 0);
      for (auto e = e0; e < e1; ++e) ++bucket_begin[static_cast<std::size_t>(rulebook.entries[e].offset) + 1];
      for (std::size_t k = 0; k < volume; ++k) bucket_begin[k + 1] += bucket_begin[k];
      bucket.resize(static_cast<std::size_t>(e1 - e0));
      std::vector<std::int64_t> cursor(bucket_begin.begin(), bucket_begin.end() - 1);
      for (std::size_t j = row0; j < row1; ++j) {
        for (auto e = rulebook.row_begin[j]; e < rulebook.row_begin[j + 1]; ++e) {
          const RuleEntry& r = rulebook.entries[static_cast<std::size_t>(e)];
          bucket[static_cast<std::size_t>(cursor[static_cast<std::size_t>(r.offset)]++)] = {
              r.input, static_cast<std::int32_t>(j)};
        }
      }
      for (std::size_t j = row0; j < row1; ++j) {
        if (!w.bias.empty()) std::copy(w.bias.begin(), w.bias.end(), y.features.data() + j * cout);
      }
      for (std::size_t k = 0; k < volume; ++k) {
        const auto b0 = static_cast<std::size_t>(bucket_begin[k]);
        const auto n = static_cast<std::size_t>(bucket_begin[k + 1]) - b0;
        if (n == 0) continue;
        gathered.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cin));
        for (std::size_t i = 0; i < n; ++i) {
          const float* in = x.features.data() + static_cast<std::size_t>(bucket[b0 + i].first) * cin;
          std::copy(in, in + cin, gathered.data() + i * cin);
        }
        const Eigen::Map<const RowMat> wk(w.weight.data() + k * cin * cout, static_cast<Eigen::Index>(cin),
                                          static_cast<Eigen::Index>(cout));
        product.noalias() = gathered * wk;
        for (std::size_t i = 0; i < n; ++i) {
          float* out = y.features.data() + static_cast<std::size_t>(bucket[b0 + i].second) * cout;
          const float* src = product.data() + i * cout;
          for (std::size_t co = 0; co < cout; ++co) out[co] += src[co];
        }
      }
    }
  });
  return y;
}

SparseTensor4D batchnorm_relu(SparseTensor4D x, const BatchNormParams& p) {
  const auto c = static_cast<std::size_t>(x.channels);
  require(p.gamma.size() == c && p.beta.size() == c && p.mean.size() == c && p.var.size() == c,
          ErrorCode::kShapeMismatch, "batch norm parameter length mismatch");
  for (float v : p.var) require(v >= 0.0f, ErrorCode::kInvalidArgument, "batch norm variance must be >= 0");
  require(p.eps >= 0.0, ErrorCode::kInvalidArgument, "batch norm eps must be >= 0");
  std::vector<double> scale(c);
  for (std::size_t k = 0; k < c; ++k) scale[k] = p.gamma[k] / std::sqrt(static_cast<double>(p.var[k]) + p.eps);
  for (std::size_t i = 0; i < x.size(); ++i) {
    float* row = x.features.data() + i * c;
    for (std::size_t k = 0; k < c; ++k) {
      const double y = scale[k] * (row[k] - static_cast<double>(p.mean[k])) + p.beta[k];
      row[k] = static_cast<float>(std::max(0.0, y));
    }
  }
  return x;
}

void BackboneConfig::validate() const {
  require(in_channels >= 1, ErrorCode::kConfig, "backbone in_channels must be >= 1");
  for (int w : widths) require(w >= 1, ErrorCode::kConfig, "backbone widths must be >= 1");
  for (const auto& s : strides) {
    for (int v : s) require(v >= 1, ErrorCode::kConfig, "backbone strides must be >= 1");
  }
  require(submanifold_blocks >= 0, ErrorCode::kConfig, "submanifold_blocks must be >= 0");
}

Shape4 BackboneConfig::output_shape(const Shape4& input) const {
  Shape4 shape = input;
  for (const auto& s : strides) {
    ConvSpec4D spec;
    spec.submanifold = false;
    spec.stride = s;
    shape = spec.output_shape(shape);
  }
  return shape;
}

namespace {

struct BlockLayout {
  std::string name;
  int in;
  int out;
  bool submanifold;
  Shape4 stride;
};

std::vector<BlockLayout> block_layout(const BackboneConfig& cfg) {
  std::vector<BlockLayout> blocks;
  blocks.push_back({"input", cfg.in_channels, cfg.widths[0], true, {1, 1, 1, 1}});
  for (int s = 0; s < 4; ++s) {
    const std::string stage = "stage" + std::to_string(s + 1);
    const int in = cfg.widths[static_cast<std::size_t>(s)];
    const int out = cfg.widths[static_cast<std::size_t>(s + 1)];
    blocks.push_back({stage + ".block0", in, out, false, cfg.strides[static_cast<std::size_t>(s)]});
    for (int b = 1; b <= cfg.submanifold_blocks; ++b) {
      blocks.push_back({stage + ".block" + std::to_string(b), out, out, true, {1, 1, 1, 1}});
    }
  }
  return blocks;
}

}  // namespace

std::vector<ParamSpec> spconv4d_param_specs(const BackboneConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> specs;
  for (const BlockLayout& b : block_layout(cfg)) {
    specs.push_back({b.name + ".conv.weight", {81, b.in, b.out}});
    specs.push_back({b.name + ".conv.bias", {b.out}});
    for (const char* p : {"gamma", "beta", "mean", "var"}) specs.push_back({b.name + ".bn." + p, {b.out}});
  }
  return specs;
}

WeightBundle init_spconv4d_weights(const BackboneConfig& cfg, std::uint64_t seed) {
  WeightBundle bundle;
  std::mt19937_64 rng(mix_seed(seed, 0x5c0));
  for (const BlockLayout& b : block_layout(cfg)) {
    const auto out = static_cast<std::size_t>(b.out);
    bundle.set(b.name + ".conv.weight", {81, b.in, b.out},
               normal_values(rng, 81 * static_cast<std::size_t>(b.in) * out, std::sqrt(2.0 / (81.0 * b.in))));
    bundle.set(b.name + ".conv.bias", {b.out}, std::vector<float>(out, 0.0f));
    bundle.set(b.name + ".bn.gamma", {b.out}, std::vector<float>(out, 1.0f));
    bundle.set(b.name + ".bn.beta", {b.out}, std::vector<float>(out, 0.0f));
    bundle.set(b.name + ".bn.mean", {b.out}, std::vector<float>(out, 0.0f));
    bundle.set(b.name + ".bn.var", {b.out}, std::vector<float>(out, 1.0f));
  }
  return bundle;
}

std::vector<ConvBlock> spconv4d_blocks(const WeightBundle& bundle, const BackboneConfig& cfg) {
  bundle.validate_against(spconv4d_param_specs(cfg));
  std::vector<ConvBlock> blocks;
  for (const BlockLayout& b : block_layout(cfg)) {
    ConvBlock block;
    block.name = b.name;
    block.spec.in_channels = b.in;
    block.spec.out_channels = b.out;
    block.spec.submanifold = b.submanifold;
    block.spec.stride = b.stride;
    auto fetch = [&](const std::string& n, std::vector<std::int64_t> shape) {
      const auto v = bundle.get(b.name + n, shape);
      return std::vector<float>(v.begin(), v.end());
    };
    block.weights.weight = fetch(".conv.weight", {81, b.in, b.out});
    block.weights.bias = fetch(".conv.bias", {b.out});
    block.bn.gamma = fetch(".bn.gamma", {b.out});
    block.bn.beta = fetch(".bn.beta", {b.out});
    block.bn.mean = fetch(".bn.mean", {b.out});
    block.bn.var = fetch(".bn.var", {b.out});
    block.bn.eps = cfg.bn_eps;
    blocks.push_back(std::move(block));
  }
  return blocks;
}

SparseTensor4D spconv4d_backbone(const SparseTensor4D& x, const WeightBundle& bundle, const BackboneConfig& cfg,
                                 BackboneTrace* trace, int threads) {
  x.validate();
  require(x.channels == cfg.in_channels, ErrorCode::kShapeMismatch,
          "backbone expects " + std::to_string(cfg.in_channels) + " input channels, got " + std::to_string(x.channels));
  const std::vector<ConvBlock> blocks = spconv4d_blocks(bundle, cfg);
  SparseTensor4D cur = x;
  // Consecutive submanifold blocks see the same sites, so they share one rulebook.
  Rulebook shared;
  bool shared_valid = false;
  for (const ConvBlock& block : blocks) {
    if (!block.spec.submanifold || !shared_valid) {
      shared = build_rulebook(cur.indices, cur.spatial_shape, block.spec, threads);
      shared_valid = block.spec.submanifold;
    }
    cur = batchnorm_relu(sparse_conv4d(cur, block.weights, block.spec, shared, threads), block.bn);
    if (trace) {
      trace->shapes.push_back(cur.spatial_shape);
      trace->voxels.push_back(cur.size());
    }
  }
  return cur;
}

DenseTensor4D to_dense(const SparseTensor4D& x) {
  DenseTensor4D d;
  d.shape = x.spatial_shape;
  d.channels = x.channels;
  require(d.cells() <= kDenseOracleMaxCells, ErrorCode::kInvalidArgument, "dense tensor exceeds the size guard");
  d.data.assign(d.cells() * static_cast<std::size_t>(x.channels), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int c = 0; c < x.channels; ++c) d.at(x.indices[i], c) = x.row(i)[static_cast<std::size_t>(c)];
  }
  return d;
}

DenseTensor4D dense_oracle_conv4d(const DenseTensor4D& input, const ConvWeights& w, const ConvSpec4D& spec) {
  spec.validate();
  require(input.cells() <= kDenseOracleMaxCells, ErrorCode::kInvalidArgument, "dense oracle size guard exceeded");
  require(input.channels == spec.in_channels, ErrorCode::kShapeMismatch, "dense oracle channel mismatch");
  const int cin = spec.in_channels, cout = spec.out_channels;
  require(w.weight.size() == static_cast<std::size_t>(spec.kernel_volume()) * cin * cout, ErrorCode::kShapeMismatch,
          "dense oracle weight shape mismatch");
  DenseTensor4D out;
  out.shape = spec.output_shape(input.shape);
  out.channels = cout;
  require(out.cells() <= kDenseOracleMaxCells, ErrorCode::kInvalidArgument, "dense oracle size guard exceeded");
  out.data.assign(out.cells() * static_cast<std::size_t>(cout), 0.0);

  Shape4 stride = spec.stride, pad = spec.padding;
  if (spec.submanifold) {
    for (int a = 0; a < 4; ++a) {
      stride[a] = 1;
      pad[a] = spec.kernel[a] / 2;
    }
  }
  VoxelIndex o;
  for (o.x = 0; o.x < out.shape[0]; ++o.x) {
    for (o.y = 0; o.y < out.shape[1]; ++o.y) {
      for (o.z = 0; o.z < out.shape[2]; ++o.z) {
        for (o.t = 0; o.t < out.shape[3]; ++o.t) {
          for (int co = 0; co < cout; ++co) out.at(o, co) = w.bias.empty() ? 0.0 : w.bias[static_cast<std::size_t>(co)];
          for (int k = 0; k < spec.kernel_volume(); ++k) {
            const Shape4 kp = spec.offset_position(k);
            VoxelIndex in;
            bool inside = true;
            for (int a = 0; a < 4 && inside; ++a) {
              in[a] = o[a] * stride[a] - pad[a] + kp[a];
              inside = in[a] >= 0 && in[a] < input.shape[a];
            }
            if (!inside) continue;
            for (int ci = 0; ci < cin; ++ci) {
              const double v = input.at(in, ci);
              if (v == 0.0) continue;
              for (int co = 0; co < cout; ++co) {
                out.at(o, co) += v * w.weight[(static_cast<std::size_t>(k) * cin + ci) * cout + co];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

}  // namespace pod4d::sparse4d
