#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "pod4d/box.hpp"
#include "pod4d/tensor.hpp"

namespace pod4d::bevmap {

// Splits by t index; both outputs have Nt = 1 and keep every other index.
std::pair<SparseTensor4D, SparseTensor4D> separate_temporal(const SparseTensor4D& x);

enum class Compression { kMaxOverZ, kConcatOverZ };

const char* compression_name(Compression c);
Compression compression_from_name(const std::string& name);

struct BevMap {
  int channels = 0;
  int ny = 0;
  int nx = 0;
  std::array<double, 2> resolution{0.0, 0.0};  // meters per cell along x, y
  std::array<double, 2> origin{0.0, 0.0};      // meters at the low corner of cell (0, 0)
  TimeTag time_tag = TimeTag::kCurrent;
  double delta_t = 0.0;
  std::vector<float> data;              // channels x ny x nx
  std::vector<std::uint8_t> occupancy;  // ny x nx, 1 where at least one voxel landed

  std::size_t cell(int iy, int ix) const { return static_cast<std::size_t>(iy) * nx + ix; }
  float at(int c, int iy, int ix) const { return data[static_cast<std::size_t>(c) * ny * nx + cell(iy, ix)]; }
  // Cell containing a metric position, or false when outside the grid.
  bool locate(double x, double y, int& iy, int& ix) const;
};

struct BevGeometry {
  std::array<double, 2> resolution{0.32, 0.32};
  std::array<double, 2> origin{0.0, -51.2};
};

// Scatter into a zero-initialized grid. kConcatOverZ stacks z slices into
// channels (channel = z * C + c); kMaxOverZ keeps the per-channel max.
BevMap densify_bev(const SparseTensor4D& x, Compression mode, const BevGeometry& geometry);

// Header: "BEV1", int32 C, Ny, Nx, float64 res_x, res_y, origin_x, origin_y; body float32 C x Ny x Nx.
void write_bev(const BevMap& map, const std::filesystem::path& path);
BevMap read_bev(const std::filesystem::path& path);

}  // namespace pod4d::bevmap
