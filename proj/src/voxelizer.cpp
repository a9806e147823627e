#include "pod4d/voxelizer.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

namespace pod4d::voxelizer {

const char* channel_mode_name(ChannelMode m) {
  switch (m) {
    case ChannelMode::kXyz:
      return "xyz";
    case ChannelMode::kXyzi:
      return "xyzi";
    case ChannelMode::kXyziRelv:
      return "xyzi_relv";
    case ChannelMode::kXyziAbsv:
      return "xyzi_absv";
  }
  return "?";
}

ChannelMode channel_mode_from_name(const std::string& name) {
  for (ChannelMode m : {ChannelMode::kXyz, ChannelMode::kXyzi, ChannelMode::kXyziRelv, ChannelMode::kXyziAbsv}) {
    if (name == channel_mode_name(m)) return m;
  }
  fail(ErrorCode::kConfig, "unknown channel mode '" + name + "'");
}

int channel_mode_width(ChannelMode m) {
  switch (m) {
    case ChannelMode::kXyz:
      return 3;
    case ChannelMode::kXyzi:
      return 4;
    case ChannelMode::kXyziRelv:
    case ChannelMode::kXyziAbsv:
      return 5;
  }
  return 0;
}

void VoxelGridConfig::validate() const {
  for (double s : voxel_size) require(s > 0.0, ErrorCode::kConfig, "voxel sizes must be > 0");
  validate_shape(grid_shape);
  require(count_cap >= 1, ErrorCode::kConfig, "count_cap must be >= 1");
}

VoxelGridConfig VoxelGridConfig::spconv4d_default() { return {}; }

VoxelGridConfig VoxelGridConfig::pillar_default() {
  VoxelGridConfig cfg;
  cfg.voxel_size = {0.32, 0.32, 16.0};
  cfg.grid_shape = {472, 320, 1, 2};
  return cfg;
}

Voxel4DSet voxelize_4d(const preprocess::TwoFramePoints& points, const VoxelGridConfig& cfg) {
  cfg.validate();
  Voxel4DSet out;
  out.points_in = points.records.size();
  out.tensor.spatial_shape = cfg.grid_shape;
  out.tensor.channels = cfg.feature_channels();

  struct Entry {
    std::uint64_t key;
    std::uint32_t record;
  };
  std::vector<Entry> entries;
  entries.reserve(points.records.size());
  for (std::size_t r = 0; r < points.records.size(); ++r) {
    const auto& rec = points.records[r];
    VoxelIndex idx;
    bool inside = true;
    for (int a = 0; a < 3; ++a) {
      const double f = std::floor((rec.position[a] - cfg.origin[static_cast<std::size_t>(a)]) /
                                  cfg.voxel_size[static_cast<std::size_t>(a)]);
      if (!(f >= 0.0 && f < cfg.grid_shape[static_cast<std::size_t>(a)])) {
        inside = false;
        break;
      }
      idx[a] = static_cast<std::int32_t>(f);
    }
    idx.t = rec.t_label;
    if (!inside || rec.t_label < 0 || rec.t_label >= cfg.grid_shape[3]) {
      ++out.points_dropped;
      continue;
    }
    entries.push_back({idx.pack(), static_cast<std::uint32_t>(r)});
  }

  // Within a voxel, points are ordered by value so the summation order (and the
  // resulting bits) do not depend on the input order.
  auto value_key = [&](std::uint32_t r) {
    const auto& p = points.records[r];
    return std::make_tuple(p.position.x(), p.position.y(), p.position.z(), p.intensity, p.v_rel, p.v_abs);
  };
  std::sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
    if (a.key != b.key) return a.key < b.key;
    return value_key(a.record) < value_key(b.record);
  });

  const int mode_width = channel_mode_width(cfg.channel_mode);
  std::vector<double> acc(static_cast<std::size_t>(mode_width));
  for (std::size_t begin = 0; begin < entries.size();) {
    std::size_t end = begin;
    while (end < entries.size() && entries[end].key == entries[begin].key) ++end;
    std::fill(acc.begin(), acc.end(), 0.0);
    Vec3 pos_sum = Vec3::Zero();
    for (std::size_t e = begin; e < end; ++e) {
      const auto& p = points.records[entries[e].record];
      pos_sum += p.position;
      acc[0] += p.position.x();
      acc[1] += p.position.y();
      acc[2] += p.position.z();
      if (mode_width >= 4) acc[3] += p.intensity;
      if (cfg.channel_mode == ChannelMode::kXyziRelv) acc[4] += p.v_rel;
      if (cfg.channel_mode == ChannelMode::kXyziAbsv) acc[4] += p.v_abs;
    }
    const auto count = static_cast<double>(end - begin);
    const VoxelIndex idx = VoxelIndex::unpack(entries[begin].key);
    out.tensor.indices.push_back(idx);
    out.point_counts.push_back(static_cast<int>(end - begin));
    for (int c = 0; c < mode_width; ++c)
      out.tensor.features.push_back(static_cast<float>(acc[static_cast<std::size_t>(c)] / count));
    const Vec3 mean = pos_sum / count;
    for (int a = 0; a < 3; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      const double center = cfg.origin[ua] + (idx[a] + 0.5) * cfg.voxel_size[ua];
      out.tensor.features.push_back(static_cast<float>(mean[a] - center));
    }
    out.tensor.features.push_back(
        static_cast<float>(std::min(count, static_cast<double>(cfg.count_cap)) / cfg.count_cap));
    begin = end;
  }
  return out;
}

SparseTensor4D project_features(const SparseTensor4D& x, const LinearParams& params) {
  require(params.in_channels == x.channels, ErrorCode::kShapeMismatch,
          "projection expects " + std::to_string(params.in_channels) + " input channels, got " +
              std::to_string(x.channels));
  require(params.weight.size() == static_cast<std::size_t>(params.in_channels) * params.out_channels &&
              params.bias.size() == static_cast<std::size_t>(params.out_channels),
          ErrorCode::kShapeMismatch, "projection weight/bias shape mismatch");
  SparseTensor4D y;
  y.indices = x.indices;
  y.spatial_shape = x.spatial_shape;
  y.channels = params.out_channels;
  y.features.assign(x.size() * static_cast<std::size_t>(params.out_channels), 0.0f);
  const auto cin = static_cast<std::size_t>(params.in_channels);
  const auto cout = static_cast<std::size_t>(params.out_channels);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float* in = x.features.data() + i * cin;
    float* o = y.features.data() + i * cout;
    std::copy(params.bias.begin(), params.bias.end(), o);
    for (std::size_t c = 0; c < cin; ++c) {
      const float* w = params.weight.data() + c * cout;
      for (std::size_t k = 0; k < cout; ++k) o[k] += in[c] * w[k];
    }
    for (std::size_t k = 0; k < cout; ++k) o[k] = std::max(o[k], 0.0f);
  }
  return y;
}

}  // namespace pod4d::voxelizer
