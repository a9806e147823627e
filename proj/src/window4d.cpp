#include "pod4d/window4d.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "pod4d/parallel.hpp"

namespace pod4d::window4d {

namespace {

// y = b + x W, W is in x out row-major.
void affine(const float* x, std::span<const float> w, std::span<const float> b, std::size_t in, std::size_t out,
            float* y) {
  std::copy(b.begin(), b.end(), y);
  for (std::size_t i = 0; i < in; ++i) {
    const float v = x[i];
    const float* row = w.data() + i * out;
    for (std::size_t o = 0; o < out; ++o) y[o] += v * row[o];
  }
}

void check_size(const std::vector<float>& v, std::size_t n, const char* what) {
  require(v.size() == n, ErrorCode::kShapeMismatch,
          std::string("attention parameter ") + what + " has " + std::to_string(v.size()) + " values, expected " +
              std::to_string(n));
}

}  // namespace

void WindowConfig::validate() const {
  for (int a = 0; a < 4; ++a) {
    require(window_shape[a] >= 1, ErrorCode::kConfig, "window_shape components must be >= 1");
    require(hybrid_factor[a] >= 1 && window_shape[a] % hybrid_factor[a] == 0, ErrorCode::kConfig,
            "hybrid_factor must divide window_shape");
  }
  require(set_capacity >= 1, ErrorCode::kConfig, "set_capacity must be >= 1");
  require(!shifts.empty(), ErrorCode::kConfig, "at least one shift is required");
  for (const Shape4& s : shifts) {
    for (int a = 0; a < 4; ++a) {
      require(s[a] >= 0 && s[a] < window_shape[a], ErrorCode::kConfig,
              "shift components must lie in [0, window_shape)");
    }
  }
}

Shape4 WindowConfig::effective_shape() const {
  Shape4 s{};
  for (int a = 0; a < 4; ++a) s[a] = window_shape[a] / hybrid_factor[a];
  return s;
}

WindowAssignment assign_windows(std::span<const VoxelIndex> indices, const WindowConfig& cfg, const Shape4& shift) {
  cfg.validate();
  const Shape4 eff = cfg.effective_shape();
  WindowAssignment out;
  out.window.resize(indices.size());
  out.inner.resize(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    for (int a = 0; a < 4; ++a) {
      const std::int32_t s = indices[i][a] + shift[a];
      require(s >= 0, ErrorCode::kInvalidArgument, "negative shifted window coordinate");
      out.window[i][a] = s / eff[a];
      out.inner[i][a] = s % eff[a];
    }
  }
  return out;
}

std::size_t SetPartition::valid_slots() const {
  std::size_t n = 0;
  for (const VoxelSet& s : sets) n += static_cast<std::size_t>(s.valid);
  return n;
}

SetPartition partition_sets(const WindowAssignment& assignment, const WindowConfig& cfg, SortAxis axis) {
  cfg.validate();
  require(assignment.window.size() == assignment.inner.size(), ErrorCode::kShapeMismatch,
          "window assignment arrays differ in length");
  const std::size_t n = assignment.window.size();
  std::vector<std::int32_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int first = axis == SortAxis::kX ? 0 : 1;
  const int second = axis == SortAxis::kX ? 1 : 0;
  std::sort(order.begin(), order.end(), [&](std::int32_t a, std::int32_t b) {
    const auto& wa = assignment.window[static_cast<std::size_t>(a)];
    const auto& wb = assignment.window[static_cast<std::size_t>(b)];
    if (wa != wb) return wa < wb;
    const auto& ia = assignment.inner[static_cast<std::size_t>(a)];
    const auto& ib = assignment.inner[static_cast<std::size_t>(b)];
    const std::array<std::int32_t, 5> ka{ia[first], ia[second], ia[2], ia[3], a};
    const std::array<std::int32_t, 5> kb{ib[first], ib[second], ib[2], ib[3], b};
    return ka < kb;
  });

  SetPartition part;
  part.capacity = cfg.set_capacity;
  const auto cap = static_cast<std::size_t>(cfg.set_capacity);
  for (std::size_t begin = 0; begin < n;) {
    const Coord4 win = assignment.window[static_cast<std::size_t>(order[begin])];
    std::size_t end = begin;
    while (end < n && assignment.window[static_cast<std::size_t>(order[end])] == win) ++end;
    for (std::size_t c = begin; c < end; c += cap) {
      VoxelSet set;
      set.window = win;
      set.axis = axis;
      set.slots.assign(cap, -1);
      set.mask.assign(cap, 0);
      const std::size_t stop = std::min(end, c + cap);
      for (std::size_t k = c; k < stop; ++k) {
        set.slots[k - c] = order[k];
        set.mask[k - c] = 1;
      }
      set.valid = static_cast<int>(stop - c);
      part.sets.push_back(std::move(set));
    }
    begin = end;
  }
  return part;
}

PositionalTables PositionalTables::zeros(const Shape4& shape, int channels) {
  PositionalTables t;
  t.channels = channels;
  for (int a = 0; a < 4; ++a) {
    t.tables[static_cast<std::size_t>(a)].assign(static_cast<std::size_t>(shape[a]) * channels, 0.0f);
  }
  return t;
}

std::vector<float> positional_encoding(std::span<const Coord4> inner, const PositionalTables& tables) {
  const auto c = static_cast<std::size_t>(tables.channels);
  std::vector<float> out(inner.size() * c, 0.0f);
  for (std::size_t i = 0; i < inner.size(); ++i) {
    float* row = out.data() + i * c;
    for (std::size_t a = 0; a < 4; ++a) {
      const auto rows = c == 0 ? 0 : tables.tables[a].size() / c;
      require(inner[i][a] >= 0 && static_cast<std::size_t>(inner[i][a]) < rows, ErrorCode::kInvalidArgument,
              "inner coordinate " + std::to_string(inner[i][a]) + " outside positional table for axis " +
                  std::to_string(a));
      const float* src = tables.tables[a].data() + static_cast<std::size_t>(inner[i][a]) * c;
      for (std::size_t k = 0; k < c; ++k) row[k] += src[k];
    }
  }
  return out;
}

void AttentionParams::validate() const {
  require(channels >= 1 && heads >= 1 && channels % heads == 0, ErrorCode::kShapeMismatch,
          "feature width must be divisible by the head count");
  require(ffn_channels >= 0, ErrorCode::kShapeMismatch, "ffn_channels must be >= 0");
  const auto c = static_cast<std::size_t>(channels), f = static_cast<std::size_t>(ffn_channels);
  check_size(q_w, c * c, "q_w");
  check_size(k_w, c * c, "k_w");
  check_size(v_w, c * c, "v_w");
  check_size(o_w, c * c, "o_w");
  check_size(q_b, c, "q_b");
  check_size(k_b, c, "k_b");
  check_size(v_b, c, "v_b");
  check_size(o_b, c, "o_b");
  check_size(ffn1_w, c * f, "ffn1_w");
  check_size(ffn1_b, f, "ffn1_b");
  check_size(ffn2_w, f * c, "ffn2_w");
  check_size(ffn2_b, c, "ffn2_b");
}

AttentionParams AttentionParams::identity(int channels, int heads, int ffn_channels) {
  AttentionParams p;
  p.channels = channels;
  p.heads = heads;
  p.ffn_channels = ffn_channels;
  const auto c = static_cast<std::size_t>(channels), f = static_cast<std::size_t>(ffn_channels);
  std::vector<float> eye(c * c, 0.0f);
  for (std::size_t i = 0; i < c; ++i) eye[i * c + i] = 1.0f;
  p.q_w = p.k_w = p.v_w = p.o_w = eye;
  p.q_b = p.k_b = p.v_b = p.o_b = std::vector<float>(c, 0.0f);
  p.ffn1_w.assign(c * f, 0.0f);
  p.ffn1_b.assign(f, 0.0f);
  p.ffn2_w.assign(f * c, 0.0f);
  p.ffn2_b.assign(c, 0.0f);
  return p;
}

void masked_softmax(std::span<const float> logits, std::span<const std::uint8_t> mask, std::span<float> probs) {
  float max_logit = -std::numeric_limits<float>::infinity();
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (mask[j]) max_logit = std::max(max_logit, logits[j]);
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    probs[j] = mask[j] ? std::exp(logits[j] - max_logit) : 0.0f;
    sum += probs[j];
  }
  if (sum <= 0.0) return;
  const auto inv = static_cast<float>(1.0 / sum);
  for (float& p : probs) p *= inv;
}

void attend_padded_set(std::span<const float> slots, std::span<const float> pos, std::span<const std::uint8_t> mask,
                       const AttentionParams& params, std::span<float> out) {
  const auto c = static_cast<std::size_t>(params.channels);
  const auto f = static_cast<std::size_t>(params.ffn_channels);
  const std::size_t cap = mask.size();
  const auto heads = static_cast<std::size_t>(params.heads);
  const std::size_t dh = c / heads;
  require(slots.size() == cap * c && (pos.empty() || pos.size() == cap * c) && out.size() == cap * c,
          ErrorCode::kShapeMismatch, "padded set buffers do not match capacity x channels");

  std::vector<std::size_t> valid;
  for (std::size_t r = 0; r < cap; ++r) {
    if (mask[r]) valid.push_back(r);
  }
  const std::size_t n = valid.size();
  if (n == 0) return;

  std::vector<float> q(n * c), k(n * c), v(n * c), qk_in(c);
  for (std::size_t i = 0; i < n; ++i) {
    const float* x = slots.data() + valid[i] * c;
    for (std::size_t ch = 0; ch < c; ++ch) qk_in[ch] = x[ch] + (pos.empty() ? 0.0f : pos[valid[i] * c + ch]);
    affine(qk_in.data(), params.q_w, params.q_b, c, c, q.data() + i * c);
    affine(qk_in.data(), params.k_w, params.k_b, c, c, k.data() + i * c);
    affine(x, params.v_w, params.v_b, c, c, v.data() + i * c);
  }

  const float scale = 1.0f / std::sqrt(static_cast<float>(dh));
  const std::vector<std::uint8_t> all_valid(n, 1);
  std::vector<float> logits(n), probs(n), attn(c), y(c), hidden(f), ffn_out(c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t h = 0; h < heads; ++h) {
      const float* qi = q.data() + i * c + h * dh;
      for (std::size_t j = 0; j < n; ++j) {
        const float* kj = k.data() + j * c + h * dh;
        float dot = 0.0f;
        for (std::size_t d = 0; d < dh; ++d) dot += qi[d] * kj[d];
        logits[j] = dot * scale;
      }
      masked_softmax(logits, all_valid, probs);
      for (std::size_t d = 0; d < dh; ++d) {
        float acc = 0.0f;
        for (std::size_t j = 0; j < n; ++j) acc += probs[j] * v[j * c + h * dh + d];
        attn[h * dh + d] = acc;
      }
    }
    const float* x = slots.data() + valid[i] * c;
    affine(attn.data(), params.o_w, params.o_b, c, c, y.data());
    if (params.attn_residual) {
      for (std::size_t ch = 0; ch < c; ++ch) y[ch] += x[ch];
    }
    float* z = out.data() + valid[i] * c;
    if (f == 0) {
      std::copy(y.begin(), y.end(), z);
      continue;
    }
    affine(y.data(), params.ffn1_w, params.ffn1_b, c, f, hidden.data());
    for (float& hv : hidden) hv = std::max(hv, 0.0f);
    affine(hidden.data(), params.ffn2_w, params.ffn2_b, f, c, ffn_out.data());
    for (std::size_t ch = 0; ch < c; ++ch) z[ch] = y[ch] + ffn_out[ch];
  }
}

std::vector<float> set_attention(std::span<const float> features, std::span<const float> pos,
                                 const SetPartition& partition, const AttentionParams& params,
                                 const AttentionOptions& options) {
  params.validate();
  const auto c = static_cast<std::size_t>(params.channels);
  require(features.size() % c == 0, ErrorCode::kShapeMismatch, "feature buffer is not N x channels");
  require(pos.empty() || pos.size() == features.size(), ErrorCode::kShapeMismatch,
          "positional buffer does not match features");
  const std::size_t n_rows = features.size() / c;
  const auto cap = static_cast<std::size_t>(partition.capacity);
  std::vector<float> out(features.begin(), features.end());

  parallel_for(partition.sets.size(), options.threads, [&](std::size_t begin, std::size_t end) {
    std::vector<float> slots(cap * c), slot_pos(pos.empty() ? 0 : cap * c), result(cap * c);
    for (std::size_t s = begin; s < end; ++s) {
      const VoxelSet& set = partition.sets[s];
      require(set.slots.size() == cap && set.mask.size() == cap, ErrorCode::kShapeMismatch,
              "set does not match partition capacity");
      std::mt19937 noise(static_cast<std::uint32_t>(mix_seed(options.padding_noise_seed, s)));
      std::uniform_real_distribution<float> garbage(-1e3f, 1e3f);
      for (std::size_t r = 0; r < cap; ++r) {
        float* dst = slots.data() + r * c;
        float* pdst = pos.empty() ? nullptr : slot_pos.data() + r * c;
        if (set.mask[r]) {
          const auto row = static_cast<std::size_t>(set.slots[r]);
          require(row < n_rows, ErrorCode::kInvalidArgument, "set slot references a missing voxel");
          std::copy_n(features.data() + row * c, c, dst);
          if (pdst) std::copy_n(pos.data() + row * c, c, pdst);
        } else {
          for (std::size_t ch = 0; ch < c; ++ch) {
            dst[ch] = options.padding_noise_seed ? garbage(noise) : 0.0f;
            if (pdst) pdst[ch] = options.padding_noise_seed ? garbage(noise) : 0.0f;
          }
        }
      }
      attend_padded_set(slots, slot_pos, set.mask, params, result);
      for (std::size_t r = 0; r < cap; ++r) {
        if (!set.mask[r]) continue;
        std::copy_n(result.data() + r * c, c, out.data() + static_cast<std::size_t>(set.slots[r]) * c);
      }
    }
  });
  return out;
}

namespace {

const char* const kAxisNames[4] = {"x", "y", "z", "t"};

std::string layer_prefix(int l) { return "dsvt.layer" + std::to_string(l); }

}  // namespace

std::vector<ParamSpec> dsvt4d_param_specs(const Dsvt4dConfig& cfg, const WindowConfig& window) {
  require(
      cfg.layers >= 1 && cfg.channels >= 1 && cfg.heads >= 1 && cfg.channels % cfg.heads == 0 && cfg.ffn_channels >= 0,
      ErrorCode::kConfig, "invalid DSVT4D configuration");
  const Shape4 eff = window.effective_shape();
  const std::int64_t c = cfg.channels, f = cfg.ffn_channels;
  std::vector<ParamSpec> specs;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    for (const char* m : {"q", "k", "v", "o"}) {
      specs.push_back({p + ".attn." + m + ".weight", {c, c}});
      specs.push_back({p + ".attn." + m + ".bias", {c}});
    }
    specs.push_back({p + ".ffn1.weight", {c, f}});
    specs.push_back({p + ".ffn1.bias", {f}});
    specs.push_back({p + ".ffn2.weight", {f, c}});
    specs.push_back({p + ".ffn2.bias", {c}});
    for (int a = 0; a < 4; ++a) specs.push_back({p + ".pos." + kAxisNames[a], {eff[a], c}});
  }
  return specs;
}

WeightBundle init_dsvt4d_weights(const Dsvt4dConfig& cfg, const WindowConfig& window, std::uint64_t seed) {
  WeightBundle bundle;
  std::mt19937_64 rng(mix_seed(seed, 0xd5f));
  for (const ParamSpec& spec : dsvt4d_param_specs(cfg, window)) {
    std::vector<float> values(spec.count(), 0.0f);
    const bool is_bias = spec.name.ends_with(".bias");
    const bool is_pos = spec.name.find(".pos.") != std::string::npos;
    if (!is_bias) {
      const double stddev = is_pos ? 0.02 : 1.0 / std::sqrt(static_cast<double>(spec.shape[0]));
      std::normal_distribution<float> dist(0.0f, static_cast<float>(stddev));
      for (float& v : values) v = dist(rng);
    }
    bundle.set(spec.name, spec.shape, std::move(values));
  }
  return bundle;
}

std::vector<Dsvt4dLayer> dsvt4d_layers(const WeightBundle& bundle, const Dsvt4dConfig& cfg,
                                       const WindowConfig& window) {
  bundle.validate_against(dsvt4d_param_specs(cfg, window));
  const Shape4 eff = window.effective_shape();
  const std::int64_t c = cfg.channels, f = cfg.ffn_channels;
  auto fetch = [&](const std::string& name, std::vector<std::int64_t> shape) {
    const auto v = bundle.get(name, shape);
    return std::vector<float>(v.begin(), v.end());
  };
  std::vector<Dsvt4dLayer> layers;
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    Dsvt4dLayer layer;
    AttentionParams& a = layer.attention;
    a.channels = cfg.channels;
    a.heads = cfg.heads;
    a.ffn_channels = cfg.ffn_channels;
    a.q_w = fetch(p + ".attn.q.weight", {c, c});
    a.q_b = fetch(p + ".attn.q.bias", {c});
    a.k_w = fetch(p + ".attn.k.weight", {c, c});
    a.k_b = fetch(p + ".attn.k.bias", {c});
    a.v_w = fetch(p + ".attn.v.weight", {c, c});
    a.v_b = fetch(p + ".attn.v.bias", {c});
    a.o_w = fetch(p + ".attn.o.weight", {c, c});
    a.o_b = fetch(p + ".attn.o.bias", {c});
    a.ffn1_w = fetch(p + ".ffn1.weight", {c, f});
    a.ffn1_b = fetch(p + ".ffn1.bias", {f});
    a.ffn2_w = fetch(p + ".ffn2.weight", {f, c});
    a.ffn2_b = fetch(p + ".ffn2.bias", {c});
    layer.positional.channels = cfg.channels;
    for (int ax = 0; ax < 4; ++ax) {
      layer.positional.tables[static_cast<std::size_t>(ax)] = fetch(p + ".pos." + kAxisNames[ax], {eff[ax], c});
    }
    layers.push_back(std::move(layer));
  }
  return layers;
}

SparseTensor4D dsvt4d_block(const SparseTensor4D& x, std::span<const Dsvt4dLayer> layers, const WindowConfig& cfg,
                            int threads) {
  cfg.validate();
  x.validate();
  require(!layers.empty(), ErrorCode::kShapeMismatch, "DSVT4D block needs at least one layer");
  SparseTensor4D y = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Dsvt4dLayer& layer = layers[l];
    require(layer.attention.channels == x.channels && layer.positional.channels == x.channels,
            ErrorCode::kShapeMismatch, "DSVT4D layer width does not match the input features");
    const Shape4& shift = cfg.shifts[l % cfg.shifts.size()];
    const SortAxis axis = l % 2 == 0 ? SortAxis::kX : SortAxis::kY;
    const WindowAssignment assignment = assign_windows(y.indices, cfg, shift);
    const SetPartition partition = partition_sets(assignment, cfg, axis);
    const std::vector<float> pos = positional_encoding(assignment.inner, layer.positional);
    AttentionOptions opts;
    opts.threads = threads;
    y.features = set_attention(y.features, pos, partition, layer.attention, opts);
  }
  return y;
}

SparseTensor4D pool_4d(const SparseTensor4D& x, bool pool_z, bool pool_t) {
  require(pool_z || pool_t, ErrorCode::kInvalidArgument, "pool_4d needs at least one axis");
  const auto c = static_cast<std::size_t>(x.channels);
  std::vector<std::pair<std::uint64_t, std::size_t>> keyed(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    VoxelIndex idx = x.indices[i];
    if (pool_z) idx.z = 0;
    if (pool_t) idx.t = 0;
    keyed[i] = {idx.pack(), i};
  }
  std::sort(keyed.begin(), keyed.end());
  SparseTensor4D y;
  y.channels = x.channels;
  y.spatial_shape = x.spatial_shape;
  if (pool_z) y.spatial_shape[2] = 1;
  if (pool_t) y.spatial_shape[3] = 1;
  for (std::size_t b = 0; b < keyed.size();) {
    std::size_t e = b;
    y.indices.push_back(VoxelIndex::unpack(keyed[b].first));
    const std::size_t base = y.features.size();
    const auto first = x.row(keyed[b].second);
    y.features.insert(y.features.end(), first.begin(), first.end());
    for (++e; e < keyed.size() && keyed[e].first == keyed[b].first; ++e) {
      const auto row = x.row(keyed[e].second);
      for (std::size_t k = 0; k < c; ++k) y.features[base + k] = std::max(y.features[base + k], row[k]);
    }
    b = e;
  }
  return y;
}

}  // namespace pod4d::window4d
