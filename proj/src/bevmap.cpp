#include "pod4d/bevmap.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pod4d/io.hpp"

namespace pod4d::bevmap {

std::pair<SparseTensor4D, SparseTensor4D> separate_temporal(const SparseTensor4D& x) {
  require(x.spatial_shape[3] == 2, ErrorCode::kShapeMismatch,
          "temporal separation needs Nt = 2, got Nt = " + std::to_string(x.spatial_shape[3]));
  std::array<SparseTensor4D, 2> out;
  for (auto& o : out) {
    o.channels = x.channels;
    o.spatial_shape = {x.spatial_shape[0], x.spatial_shape[1], x.spatial_shape[2], 1};
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    VoxelIndex idx = x.indices[i];
    SparseTensor4D& dst = out[static_cast<std::size_t>(idx.t)];
    idx.t = 0;
    dst.indices.push_back(idx);
    const auto row = x.row(i);
    dst.features.insert(dst.features.end(), row.begin(), row.end());
  }
  return {std::move(out[0]), std::move(out[1])};
}

const char* compression_name(Compression c) { return c == Compression::kMaxOverZ ? "max_over_z" : "concat_over_z"; }

Compression compression_from_name(const std::string& name) {
  if (name == "max_over_z") return Compression::kMaxOverZ;
  if (name == "concat_over_z") return Compression::kConcatOverZ;
  fail(ErrorCode::kConfig, "unknown BEV compression '" + name + "'");
}

bool BevMap::locate(double x, double y, int& iy, int& ix) const {
  const double fx = std::floor((x - origin[0]) / resolution[0]);
  const double fy = std::floor((y - origin[1]) / resolution[1]);
  if (fx < 0 || fy < 0 || fx >= nx || fy >= ny) return false;
  ix = static_cast<int>(fx);
  iy = static_cast<int>(fy);
  return true;
}

BevMap densify_bev(const SparseTensor4D& x, Compression mode, const BevGeometry& geometry) {
  require(x.spatial_shape[3] == 1, ErrorCode::kShapeMismatch, "densify_bev expects a single temporal slice");
  require(geometry.resolution[0] > 0 && geometry.resolution[1] > 0, ErrorCode::kConfig,
          "BEV resolution must be positive");
  const int nz = x.spatial_shape[2];
  const auto c = static_cast<std::size_t>(x.channels);
  BevMap map;
  map.nx = x.spatial_shape[0];
  map.ny = x.spatial_shape[1];
  map.channels = mode == Compression::kConcatOverZ ? x.channels * nz : x.channels;
  map.resolution = geometry.resolution;
  map.origin = geometry.origin;
  const std::size_t plane = static_cast<std::size_t>(map.nx) * map.ny;
  map.data.assign(static_cast<std::size_t>(map.channels) * plane, 0.0f);
  map.occupancy.assign(plane, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const VoxelIndex& idx = x.indices[i];
    const std::size_t cell = map.cell(idx.y, idx.x);
    const auto row = x.row(i);
    const bool first = !map.occupancy[cell];
    for (std::size_t k = 0; k < c; ++k) {
      if (mode == Compression::kConcatOverZ) {
        map.data[(static_cast<std::size_t>(idx.z) * c + k) * plane + cell] = row[k];
      } else {
        float& dst = map.data[k * plane + cell];
        dst = first ? row[k] : std::max(dst, row[k]);
      }
    }
    map.occupancy[cell] = 1;
  }
  return map;
}

namespace {

template <class T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <class T>
T take(const std::string& buf, std::size_t& pos) {
  require(pos + sizeof(T) <= buf.size(), ErrorCode::kParse, "truncated BEV dump");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

void write_bev(const BevMap& map, const std::filesystem::path& path) {
  std::string buf = "BEV1";
  put<std::int32_t>(buf, map.channels);
  put<std::int32_t>(buf, map.ny);
  put<std::int32_t>(buf, map.nx);
  for (double v : {map.resolution[0], map.resolution[1], map.origin[0], map.origin[1]}) put<double>(buf, v);
  buf.append(reinterpret_cast<const char*>(map.data.data()), map.data.size() * sizeof(float));
  io::write_bytes_atomic(path, buf);
}

BevMap read_bev(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open BEV dump '" + path.string() + "'");
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  require(buf.compare(0, 4, "BEV1") == 0, ErrorCode::kParse, "not a BEV dump: '" + path.string() + "'");
  std::size_t pos = 4;
  BevMap map;
  map.channels = take<std::int32_t>(buf, pos);
  map.ny = take<std::int32_t>(buf, pos);
  map.nx = take<std::int32_t>(buf, pos);
  map.resolution = {take<double>(buf, pos), take<double>(buf, pos)};
  map.origin = {take<double>(buf, pos), take<double>(buf, pos)};
  const std::size_t count = static_cast<std::size_t>(map.channels) * map.ny * map.nx;
  require(buf.size() - pos == count * sizeof(float), ErrorCode::kParse, "BEV dump body size mismatch");
  map.data.resize(count);
  std::memcpy(map.data.data(), buf.data() + pos, count * sizeof(float));
  map.occupancy.assign(static_cast<std::size_t>(map.ny) * map.nx, 0);
  const std::size_t plane = map.occupancy.size();
  for (std::size_t k = 0; k < count; ++k) {
    if (map.data[k] != 0.0f) map.occupancy[k % plane] = 1;
  }
  return map;
}

}  // namespace pod4d::bevmap
