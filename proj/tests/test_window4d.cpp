#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "pod4d/window4d.hpp"
#include "support.hpp"

using namespace pod4d;
using namespace pod4d::window4d;

namespace {

AttentionParams random_params(int c, int heads, int f, std::mt19937_64& rng) {
  AttentionParams p;
  p.channels = c;
  p.heads = heads;
  p.ffn_channels = f;
  const auto cc = static_cast<std::size_t>(c * c);
  const float s = 1.0f / std::sqrt(static_cast<float>(c));
  p.q_w = test::random_floats(cc, s, rng);
  p.k_w = test::random_floats(cc, s, rng);
  p.v_w = test::random_floats(cc, s, rng);
  p.o_w = test::random_floats(cc, s, rng);
  p.q_b = test::random_floats(static_cast<std::size_t>(c), 0.1f, rng);
  p.k_b = test::random_floats(static_cast<std::size_t>(c), 0.1f, rng);
  p.v_b = test::random_floats(static_cast<std::size_t>(c), 0.1f, rng);
  p.o_b = test::random_floats(static_cast<std::size_t>(c), 0.1f, rng);
  p.ffn1_w = test::random_floats(static_cast<std::size_t>(c * f), s, rng);
  p.ffn1_b = test::random_floats(static_cast<std::size_t>(f), 0.1f, rng);
  p.ffn2_w = test::random_floats(static_cast<std::size_t>(f * c), 1.0f / std::sqrt(static_cast<float>(f)), rng);
  p.ffn2_b = test::random_floats(static_cast<std::size_t>(c), 0.1f, rng);
  return p;
}

using Mat = std::vector<std::vector<double>>;

Mat matmul(const Mat& x, const std::vector<float>& w, const std::vector<float>& b, int out) {
  Mat y(x.size(), std::vector<double>(static_cast<std::size_t>(out)));
  for (std::size_t r = 0; r < x.size(); ++r) {
    for (int o = 0; o < out; ++o) {
      double acc = b[static_cast<std::size_t>(o)];
      for (std::size_t i = 0; i < x[r].size(); ++i) acc += x[r][i] * w[i * static_cast<std::size_t>(out) + o];
      y[r][static_cast<std::size_t>(o)] = acc;
    }
  }
  return y;
}

// Unpadded multi-head attention plus feed-forward over the rows of x.
Mat attention_oracle(const Mat& x, const Mat& pos, const AttentionParams& p) {
  const int c = p.channels, dh = c / p.heads;
  Mat xp = x;
  for (std::size_t r = 0; r < x.size(); ++r)
    for (int k = 0; k < c; ++k) xp[r][static_cast<std::size_t>(k)] += pos[r][static_cast<std::size_t>(k)];
  const Mat q = matmul(xp, p.q_w, p.q_b, c), k = matmul(xp, p.k_w, p.k_b, c), v = matmul(x, p.v_w, p.v_b, c);
  Mat attn(x.size(), std::vector<double>(static_cast<std::size_t>(c), 0.0));
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (int h = 0; h < p.heads; ++h) {
      std::vector<double> e(x.size());
      for (std::size_t j = 0; j < x.size(); ++j) {
        double dot = 0.0;
        for (int d = 0; d < dh; ++d) dot += q[i][h * dh + d] * k[j][h * dh + d];
        e[j] = std::exp(dot / std::sqrt(static_cast<double>(dh)));
      }
      const double z = std::accumulate(e.begin(), e.end(), 0.0);
      for (std::size_t j = 0; j < x.size(); ++j)
        for (int d = 0; d < dh; ++d) attn[i][h * dh + d] += e[j] / z * v[j][h * dh + d];
    }
  }
  Mat y = matmul(attn, p.o_w, p.o_b, c);
  if (p.attn_residual)
    for (std::size_t r = 0; r < y.size(); ++r)
      for (int ch = 0; ch < c; ++ch) y[r][ch] += x[r][ch];
  Mat hidden = matmul(y, p.ffn1_w, p.ffn1_b, p.ffn_channels);
  for (auto& row : hidden)
    for (double& h : row) h = std::max(h, 0.0);
  const Mat ffn = matmul(hidden, p.ffn2_w, p.ffn2_b, c);
  for (std::size_t r = 0; r < y.size(); ++r)
    for (int ch = 0; ch < c; ++ch) y[r][ch] += ffn[r][ch];
  return y;
}

Mat rows_of(std::span<const float> flat, std::span<const std::int32_t> rows, int c) {
  Mat m;
  for (std::int32_t r : rows) {
    m.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(r) * c,
                   flat.begin() + static_cast<std::ptrdiff_t>(r + 1) * c);
  }
  return m;
}

WindowConfig default_window() { return WindowConfig{}; }

}  // namespace

TEST_CASE("assign_windows examples") {
  const WindowConfig cfg = default_window();
  const std::vector<VoxelIndex> idx{{65, 10, 0, 1}, {0, 0, 0, 0}};
  const WindowAssignment a = assign_windows(idx, cfg, {0, 0, 0, 0});
  CHECK(a.window[0] == Coord4{1, 0, 0, 0});
  CHECK(a.inner[0] == Coord4{5, 10, 0, 1});
  CHECK(a.window[1] == Coord4{0, 0, 0, 0});
  CHECK(a.inner[1] == Coord4{0, 0, 0, 0});
  const WindowAssignment s = assign_windows(idx, cfg, {30, 30, 0, 0});
  CHECK(s.window[0] == Coord4{1, 0, 0, 0});
  CHECK(s.inner[0] == Coord4{35, 40, 0, 1});
}

TEST_CASE("shifted assignment equals assignment of shifted indices") {
  std::mt19937_64 rng(1);
  const WindowConfig cfg = default_window();
  const SparseTensor4D x = test::random_sites({400, 400, 4, 2}, 2000, 1, rng);
  const Shape4 shift{30, 30, 0, 0};
  std::vector<VoxelIndex> moved = x.indices;
  for (VoxelIndex& i : moved)
    for (int a = 0; a < 4; ++a) i[a] += shift[a];
  const WindowAssignment a = assign_windows(x.indices, cfg, shift);
  const WindowAssignment b = assign_windows(moved, cfg, {0, 0, 0, 0});
  CHECK(a.window == b.window);
  CHECK(a.inner == b.inner);
}

TEST_CASE("window config validation") {
  WindowConfig cfg;
  cfg.shifts = {{60, 0, 0, 0}};
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.set_capacity = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.window_shape[2] = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = {};
  cfg.hybrid_factor = {2, 2, 1, 1};
  CHECK(cfg.effective_shape() == Shape4{30, 30, 1, 2});
}

TEST_CASE("partition chunks windows by capacity") {
  WindowConfig cfg;
  std::vector<VoxelIndex> idx;
  for (int x = 0; x < 25; ++x)
    for (int y = 0; y < 10; ++y) idx.push_back({x, y, 0, 0});
  idx.push_back({100, 100, 0, 1});
  const SetPartition p = partition_sets(assign_windows(idx, cfg, {0, 0, 0, 0}), cfg, SortAxis::kX);
  REQUIRE(p.sets.size() == 4);
  CHECK(p.sets[0].valid == 120);
  CHECK(p.sets[1].valid == 120);
  CHECK(p.sets[2].valid == 10);
  CHECK(p.sets[3].valid == 1);
  CHECK(p.sets[3].window == Coord4{1, 1, 0, 0});
  CHECK(p.valid_slots() == idx.size());
  for (std::size_t r = 10; r < 120; ++r) {
    CHECK(p.sets[2].mask[r] == 0);
    CHECK(p.sets[2].slots[r] == -1);
  }
}

TEST_CASE("sorting along x or y permutes a window but keeps its sets' union") {
  std::mt19937_64 rng(2);
  WindowConfig cfg;
  cfg.set_capacity = 16;
  const SparseTensor4D x = test::random_sites({60, 60, 1, 2}, 300, 1, rng);
  const WindowAssignment a = assign_windows(x.indices, cfg, {0, 0, 0, 0});
  const SetPartition px = partition_sets(a, cfg, SortAxis::kX);
  const SetPartition py = partition_sets(a, cfg, SortAxis::kY);
  std::vector<std::int32_t> ox, oy;
  for (const VoxelSet& s : px.sets)
    for (std::size_t r = 0; r < s.slots.size(); ++r)
      if (s.mask[r]) ox.push_back(s.slots[r]);
  for (const VoxelSet& s : py.sets)
    for (std::size_t r = 0; r < s.slots.size(); ++r)
      if (s.mask[r]) oy.push_back(s.slots[r]);
  CHECK(ox != oy);
  CHECK(std::set<std::int32_t>(ox.begin(), ox.end()) == std::set<std::int32_t>(oy.begin(), oy.end()));
  for (std::size_t i = 1; i < oy.size(); ++i) {
    const auto& prev = a.inner[static_cast<std::size_t>(oy[i - 1])];
    const auto& cur = a.inner[static_cast<std::size_t>(oy[i])];
    CHECK(std::tie(prev[1], prev[0], prev[2], prev[3]) <= std::tie(cur[1], cur[0], cur[2], cur[3]));
  }
}

TEST_CASE("every voxel lands in exactly one set per stage") {
  std::mt19937_64 rng(3);
  const WindowConfig cfg = default_window();
  const SparseTensor4D x = test::random_sites({944, 640, 4, 2}, 20000, 1, rng);
  for (std::size_t stage = 0; stage < cfg.shifts.size(); ++stage) {
    const SetPartition p =
        partition_sets(assign_windows(x.indices, cfg, cfg.shifts[stage]), cfg, stage % 2 ? SortAxis::kY : SortAxis::kX);
    std::vector<int> seen(x.size(), 0);
    for (const VoxelSet& s : p.sets) {
      CHECK(s.valid >= 1);
      for (std::size_t r = 0; r < s.slots.size(); ++r) {
        CHECK((s.mask[r] != 0) == (s.slots[r] >= 0));
        if (s.mask[r]) ++seen[static_cast<std::size_t>(s.slots[r])];
      }
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int n) { return n == 1; }));
    CHECK(p.valid_slots() == x.size());
  }
}

TEST_CASE("positional encoding sums per-axis rows") {
  const std::vector<Coord4> inner{{1, 2, 0, 1}, {0, 0, 0, 0}};
  CHECK(positional_encoding(inner, PositionalTables::zeros({3, 3, 1, 2}, 4)) == std::vector<float>(8, 0.0f));

  PositionalTables onehot = PositionalTables::zeros({3, 3, 1, 2}, 4);
  for (int a = 0; a < 4; ++a) {
    auto& t = onehot.tables[static_cast<std::size_t>(a)];
    for (std::size_t r = 0; r < t.size() / 4; ++r) t[r * 4 + static_cast<std::size_t>(a)] = static_cast<float>(r);
  }
  const auto e = positional_encoding(inner, onehot);
  CHECK(std::vector<float>(e.begin(), e.begin() + 4) == std::vector<float>{1, 2, 0, 1});

  std::mt19937_64 rng(4);
  PositionalTables t = PositionalTables::zeros({5, 6, 2, 2}, 3);
  for (auto& tab : t.tables) tab = test::random_floats(tab.size(), 1.0f, rng);
  std::vector<Coord4> many;
  for (int i = 0; i < 20; ++i) many.push_back({i % 5, (i * 7) % 6, i % 2, (i / 2) % 2});
  const auto got = positional_encoding(many, t);
  for (std::size_t i = 0; i < many.size(); ++i) {
    for (std::size_t ch = 0; ch < 3; ++ch) {
      float ref = 0.0f;
      for (std::size_t a = 0; a < 4; ++a) ref += t.tables[a][static_cast<std::size_t>(many[i][a]) * 3 + ch];
      CHECK(got[i * 3 + ch] == ref);
    }
  }
  const std::vector<Coord4> bad{{5, 0, 0, 0}};
  CHECK_THROWS_AS(positional_encoding(bad, t), Error);
}

TEST_CASE("masked softmax") {
  const std::vector<float> logits{1.0f, 2.0f, 1e9f, -3.0f};
  const std::vector<std::uint8_t> mask{1, 1, 0, 1};
  std::vector<float> p(4);
  masked_softmax(logits, mask, p);
  CHECK(p[2] == 0.0f);
  CHECK(std::abs(p[0] + p[1] + p[3] - 1.0) < 1e-6);
  CHECK(p[1] / p[0] == doctest::Approx(std::exp(1.0)));
}

TEST_CASE("single voxel with identity projections passes through") {
  const AttentionParams id = AttentionParams::identity(8, 2, 16);
  std::vector<float> slots(4 * 8, 0.0f), out(4 * 8, -7.0f);
  std::mt19937_64 rng(5);
  const auto row = test::random_floats(8, 1.0f, rng);
  std::copy(row.begin(), row.end(), slots.begin() + 8);
  const std::vector<std::uint8_t> mask{0, 1, 0, 0};
  attend_padded_set(slots, {}, mask, id, out);
  for (std::size_t c = 0; c < 8; ++c) CHECK(out[8 + c] == doctest::Approx(2.0 * row[c]));
  CHECK(out[0] == -7.0f);

  AttentionParams no_res = id;
  no_res.attn_residual = false;
  attend_padded_set(slots, {}, mask, no_res, out);
  for (std::size_t c = 0; c < 8; ++c) CHECK(out[8 + c] == doctest::Approx(row[c]));
}

TEST_CASE("zero projections with the residual path leave features unchanged") {
  std::mt19937_64 rng(6);
  const SparseTensor4D x = test::random_sites({120, 120, 1, 2}, 500, 8, rng);
  AttentionParams p = AttentionParams::identity(8, 2, 16);
  std::fill(p.o_w.begin(), p.o_w.end(), 0.0f);
  const WindowConfig cfg = default_window();
  const SetPartition part = partition_sets(assign_windows(x.indices, cfg, {0, 0, 0, 0}), cfg, SortAxis::kX);
  CHECK(set_attention(x.features, {}, part, p) == x.features);
}

TEST_CASE("set attention matches a dense softmax oracle") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const AttentionParams p = random_params(16, 4, 24, rng);
    const auto feats = test::random_floats(7 * 16, 1.0f, rng);
    const auto pos = test::random_floats(7 * 16, 0.5f, rng);
    SetPartition part;
    part.capacity = 12;
    VoxelSet s;
    s.slots.assign(12, -1);
    s.mask.assign(12, 0);
    const std::vector<std::int32_t> order{3, 0, 6, 1, 5, 2, 4};
    const std::vector<std::size_t> where{0, 2, 3, 5, 8, 9, 11};
    for (std::size_t i = 0; i < 7; ++i) {
      s.slots[where[i]] = order[i];
      s.mask[where[i]] = 1;
    }
    s.valid = 7;
    part.sets.push_back(s);
    const auto got = set_attention(feats, pos, part, p);
    const std::vector<std::int32_t> rows{0, 1, 2, 3, 4, 5, 6};
    const Mat ref = attention_oracle(rows_of(feats, rows, 16), rows_of(pos, rows, 16), p);
    double worst = 0.0;
    for (std::size_t r = 0; r < 7; ++r)
      for (std::size_t c = 0; c < 16; ++c) worst = std::max(worst, std::abs(got[r * 16 + c] - ref[r][c]));
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("padding contents never reach valid outputs") {
  std::mt19937_64 rng(8);
  const SparseTensor4D x = test::random_sites({240, 240, 1, 2}, 3000, 16, rng);
  const AttentionParams p = random_params(16, 4, 32, rng);
  const WindowConfig cfg = default_window();
  const auto assignment = assign_windows(x.indices, cfg, {0, 0, 0, 0});
  const SetPartition part = partition_sets(assignment, cfg, SortAxis::kX);
  PositionalTables t = PositionalTables::zeros(cfg.effective_shape(), 16);
  for (auto& tab : t.tables) tab = test::random_floats(tab.size(), 0.1f, rng);
  const auto pos = positional_encoding(assignment.inner, t);
  AttentionOptions zeros, noisy;
  noisy.padding_noise_seed = 99;
  const auto a = set_attention(x.features, pos, part, p, zeros);
  const auto b = set_attention(x.features, pos, part, p, noisy);
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(a[i] - b[i])));
  CHECK(worst <= 1e-6);
}

TEST_CASE("permuting a set permutes its outputs") {
  std::mt19937_64 rng(9);
  const AttentionParams p = random_params(8, 2, 16, rng);
  const auto feats = test::random_floats(10 * 8, 1.0f, rng);
  SetPartition part;
  part.capacity = 16;
  VoxelSet s;
  s.slots.assign(16, -1);
  s.mask.assign(16, 0);
  for (int i = 0; i < 10; ++i) {
    s.slots[static_cast<std::size_t>(i)] = i;
    s.mask[static_cast<std::size_t>(i)] = 1;
  }
  s.valid = 10;
  part.sets = {s};
  const auto base = set_attention(feats, {}, part, p);
  SetPartition shuffled = part;
  std::vector<std::size_t> slot_order(16);
  std::iota(slot_order.begin(), slot_order.end(), std::size_t{0});
  std::shuffle(slot_order.begin(), slot_order.end(), rng);
  for (std::size_t r = 0; r < 16; ++r) {
    shuffled.sets[0].slots[r] = s.slots[slot_order[r]];
    shuffled.sets[0].mask[r] = s.mask[slot_order[r]];
  }
  const auto moved = set_attention(feats, {}, shuffled, p);
  for (std::size_t i = 0; i < base.size(); ++i) CHECK(std::abs(base[i] - moved[i]) < 1e-6);
}

TEST_CASE("set attention is identical across thread counts") {
  std::mt19937_64 rng(10);
  const SparseTensor4D x = test::random_sites({300, 300, 1, 2}, 4000, 8, rng);
  const AttentionParams p = random_params(8, 2, 16, rng);
  const WindowConfig cfg = default_window();
  const SetPartition part = partition_sets(assign_windows(x.indices, cfg, {0, 0, 0, 0}), cfg, SortAxis::kX);
  AttentionOptions one, four;
  four.threads = 4;
  CHECK(set_attention(x.features, {}, part, p, one) == set_attention(x.features, {}, part, p, four));
}

TEST_CASE("set attention rejects shape mismatches") {
  AttentionParams p = AttentionParams::identity(8, 3, 4);
  SetPartition part;
  part.capacity = 1;
  CHECK_THROWS_AS(set_attention(std::vector<float>(8), {}, part, p), Error);
  p = AttentionParams::identity(8, 2, 4);
  p.ffn1_b.pop_back();
  CHECK_THROWS_AS(set_attention(std::vector<float>(8), {}, part, p), Error);
  p = AttentionParams::identity(8, 2, 4);
  CHECK_THROWS_AS(set_attention(std::vector<float>(7), {}, part, p), Error);
}

TEST_CASE("dsvt4d block keeps indices and matches a composed oracle") {
  std::mt19937_64 rng(11);
  WindowConfig cfg;
  cfg.window_shape = {6, 6, 1, 2};
  cfg.shifts = {{0, 0, 0, 0}, {3, 3, 0, 0}};
  cfg.set_capacity = 5;
  const Dsvt4dConfig dc{8, 2, 16, 2};
  const SparseTensor4D x = test::random_sites({14, 14, 1, 2}, 60, 8, rng);
  const auto layers = dsvt4d_layers(init_dsvt4d_weights(dc, cfg, 3), dc, cfg);
  const SparseTensor4D y = dsvt4d_block(x, layers, cfg);
  CHECK(y.indices == x.indices);
  CHECK(y.channels == 8);

  // Monolithic recomputation: group by shifted window, order by the sort axis, chunk, attend.
  std::vector<float> feats = x.features;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Shape4 shift = cfg.shifts[l % 2];
    const int first = l % 2 == 0 ? 0 : 1, second = 1 - first;
    std::map<std::array<int, 4>, std::vector<std::pair<std::array<int, 5>, std::int32_t>>> windows;
    Mat pos(x.size(), std::vector<double>(8, 0.0));
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::array<int, 4> w{}, in{};
      for (int a = 0; a < 4; ++a) {
        w[a] = (x.indices[i][a] + shift[a]) / cfg.window_shape[a];
        in[a] = (x.indices[i][a] + shift[a]) % cfg.window_shape[a];
        for (std::size_t c = 0; c < 8; ++c)
          pos[i][c] +=
              layers[l].positional.tables[static_cast<std::size_t>(a)][static_cast<std::size_t>(in[a]) * 8 + c];
      }
      windows[w].push_back({{in[first], in[second], in[2], in[3], static_cast<int>(i)}, static_cast<std::int32_t>(i)});
    }
    std::vector<float> next = feats;
    for (auto& [w, members] : windows) {
      std::sort(members.begin(), members.end());
      for (std::size_t b = 0; b < members.size(); b += 5) {
        std::vector<std::int32_t> rows;
        Mat set_pos;
        for (std::size_t k = b; k < std::min(members.size(), b + 5); ++k) {
          rows.push_back(members[k].second);
          set_pos.push_back(pos[static_cast<std::size_t>(members[k].second)]);
        }
        const Mat out = attention_oracle(rows_of(feats, rows, 8), set_pos, layers[l].attention);
        for (std::size_t r = 0; r < rows.size(); ++r)
          for (std::size_t c = 0; c < 8; ++c)
            next[static_cast<std::size_t>(rows[r]) * 8 + c] = static_cast<float>(out[r][c]);
      }
    }
    feats = next;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < feats.size(); ++i)
    worst = std::max(worst, static_cast<double>(std::abs(feats[i] - y.features[i])));
  CHECK(worst < 1e-4);
}

TEST_CASE("dsvt4d rejects mismatched bundles and widths") {
  const WindowConfig cfg = default_window();
  const Dsvt4dConfig dc;
  WeightBundle b = init_dsvt4d_weights(dc, cfg, 1);
  b.set("dsvt.layer1.ffn1.bias", {3}, {0, 0, 0});
  CHECK_THROWS_AS(dsvt4d_layers(b, dc, cfg), Error);
  const auto layers = dsvt4d_layers(init_dsvt4d_weights(dc, cfg, 1), dc, cfg);
  std::mt19937_64 rng(12);
  const SparseTensor4D narrow = test::random_sites({60, 60, 1, 2}, 10, 16, rng);
  CHECK_THROWS_AS(dsvt4d_block(narrow, layers, cfg), Error);
  CHECK(dsvt4d_param_specs(dc, cfg).size() == 2 * 16);
}

TEST_CASE("pool_4d merges by max") {
  SparseTensor4D x;
  x.spatial_shape = {4, 4, 3, 2};
  x.channels = 2;
  x.indices = {{1, 2, 1, 0}, {1, 2, 1, 1}};
  x.features = {1, 0, 0, 1};
  const SparseTensor4D t = pool_4d(x, false, true);
  REQUIRE(t.size() == 1);
  CHECK(t.indices[0] == VoxelIndex{1, 2, 1, 0});
  CHECK(t.features == std::vector<float>{1, 1});
  CHECK(t.spatial_shape == Shape4{4, 4, 3, 1});

  SparseTensor4D one = x;
  one.indices = {{3, 1, 2, 1}};
  one.features = {0.5f, -2.0f};
  const SparseTensor4D z = pool_4d(one, true, false);
  CHECK(z.indices[0] == VoxelIndex{3, 1, 0, 1});
  CHECK(z.features == one.features);
  CHECK_THROWS_AS(pool_4d(x, false, false), Error);
}

TEST_CASE("pooling z then t equals pooling both") {
  std::mt19937_64 rng(13);
  const SparseTensor4D x = test::random_tensor({6, 6, 4, 2}, 0.3, 3, rng);
  const SparseTensor4D a = pool_4d(pool_4d(x, true, false), false, true);
  const SparseTensor4D b = pool_4d(x, true, true);
  CHECK(a.indices == b.indices);
  CHECK(a.features == b.features);
  CHECK(a.spatial_shape == b.spatial_shape);
  CHECK_NOTHROW(b.validate());
}
