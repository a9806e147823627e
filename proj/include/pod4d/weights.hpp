#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pod4d/common.hpp"

namespace pod4d {

struct ParamSpec {
  std::string name;
  std::vector<std::int64_t> shape;

  std::size_t count() const;
};

// Named float32 parameters. On disk: a JSON manifest listing name, shape and
// byte offset for each parameter, next to one little-endian float32 blob.
class WeightBundle {
 public:
  void set(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> values);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  std::span<const float> get(const std::string& name, const std::vector<std::int64_t>& expected_shape) const;
  const std::vector<std::int64_t>& shape(const std::string& name) const;
  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }

  // Every spec must be present with the exact shape; extra names are rejected too.
  void validate_against(std::span<const ParamSpec> specs) const;

  void save(const std::filesystem::path& manifest_path) const;
  static WeightBundle load(const std::filesystem::path& manifest_path);

 private:
  struct Param {
    std::vector<std::int64_t> shape;
    std::vector<float> values;
  };
  std::map<std::string, Param> params_;
};

std::string shape_string(const std::vector<std::int64_t>& shape);

}  // namespace pod4d
