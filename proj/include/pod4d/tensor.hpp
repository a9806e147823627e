#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <span>
#include <vector>

#include "pod4d/common.hpp"

namespace pod4d {

using Shape4 = std::array<int, 4>;

// Grid axes are packed 16 bits each, so every axis must stay below this bound.
inline constexpr int kMaxAxisExtent = 1 << 16;

struct VoxelIndex {
  std::int32_t x = 0;
  std::int32_t y = 0;
  std::int32_t z = 0;
  std::int32_t t = 0;

  std::int32_t operator[](int axis) const { return (&x)[axis]; }
  std::int32_t& operator[](int axis) { return (&x)[axis]; }

  // Lexicographic (x, y, z, t) order coincides with packed-key order.
  std::uint64_t pack() const {
    return (static_cast<std::uint64_t>(static_cast<std::uint16_t>(x)) << 48) |
           (static_cast<std::uint64_t>(static_cast<std::uint16_t>(y)) << 32) |
           (static_cast<std::uint64_t>(static_cast<std::uint16_t>(z)) << 16) |
           static_cast<std::uint64_t>(static_cast<std::uint16_t>(t));
  }
  static VoxelIndex unpack(std::uint64_t key) {
    return {static_cast<std::int32_t>((key >> 48) & 0xFFFF), static_cast<std::int32_t>((key >> 32) & 0xFFFF),
            static_cast<std::int32_t>((key >> 16) & 0xFFFF), static_cast<std::int32_t>(key & 0xFFFF)};
  }

  bool in_bounds(const Shape4& shape) const {
    for (int a = 0; a < 4; ++a) {
      if ((*this)[a] < 0 || (*this)[a] >= shape[a]) return false;
    }
    return true;
  }

  friend auto operator<=>(const VoxelIndex&, const VoxelIndex&) = default;
};

void validate_shape(const Shape4& shape);

// Active 4D sites with one feature row per site. Indices are unique and sorted.
struct SparseTensor4D {
  std::vector<VoxelIndex> indices;
  std::vector<float> features;  // row-major, size() x channels
  int channels = 0;
  Shape4 spatial_shape{1, 1, 1, 1};

  std::size_t size() const { return indices.size(); }
  bool empty() const { return indices.empty(); }
  std::span<float> row(std::size_t i) { return {features.data() + i * channels, static_cast<std::size_t>(channels)}; }
  std::span<const float> row(std::size_t i) const {
    return {features.data() + i * channels, static_cast<std::size_t>(channels)};
  }

  // Throws on duplicates, unsorted input, out-of-bounds sites or a feature size mismatch.
  void validate() const;
};

bool is_canonical(std::span<const VoxelIndex> indices);

}  // namespace pod4d
