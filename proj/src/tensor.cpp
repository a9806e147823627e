#include "pod4d/tensor.hpp"

#include <string>

namespace pod4d {

void validate_shape(const Shape4& shape) {
  for (int a = 0; a < 4; ++a) {
    require(shape[a] >= 1 && shape[a] <= kMaxAxisExtent, ErrorCode::kShapeMismatch,
            "spatial axis " + std::to_string(a) + " extent " + std::to_string(shape[a]) + " outside [1, 65536]");
  }
}

bool is_canonical(std::span<const VoxelIndex> indices) {
  for (std::size_t i = 1; i < indices.size(); ++i) {
    if (!(indices[i - 1] < indices[i])) return false;
  }
  return true;
}

void SparseTensor4D::validate() const {
  validate_shape(spatial_shape);
  require(channels >= 0, ErrorCode::kShapeMismatch, "negative channel count");
  require(features.size() == indices.size() * static_cast<std::size_t>(channels), ErrorCode::kShapeMismatch,
          "feature rows do not match index rows");
  require(is_canonical(indices), ErrorCode::kInvalidArgument, "indices are not unique and sorted");
  for (const auto& idx : indices) {
    require(idx.in_bounds(spatial_shape), ErrorCode::kInvalidArgument, "index outside spatial shape");
  }
}

}  // namespace pod4d
