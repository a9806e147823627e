#include "pod4d/weights.hpp"

#include <numeric>
#include <set>

#include "pod4d/io.hpp"

namespace pod4d {

std::size_t ParamSpec::count() const {
  return static_cast<std::size_t>(
      std::accumulate(shape.begin(), shape.end(), std::int64_t{1}, std::multiplies<std::int64_t>()));
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

void WeightBundle::set(const std::string& name, std::vector<std::int64_t> shape, std::vector<float> values) {
  const ParamSpec spec{name, shape};
  require(spec.count() == values.size(), ErrorCode::kShapeMismatch,
          "parameter '" + name + "' has " + std::to_string(values.size()) + " values for shape " + shape_string(shape));
  params_[name] = Param{std::move(shape), std::move(values)};
}

const std::vector<std::int64_t>& WeightBundle::shape(const std::string& name) const {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorCode::kShapeMismatch, "missing parameter '" + name + "'");
  return it->second.shape;
}

std::span<const float> WeightBundle::get(const std::string& name,
                                         const std::vector<std::int64_t>& expected_shape) const {
  auto it = params_.find(name);
  require(it != params_.end(), ErrorCode::kShapeMismatch, "missing parameter '" + name + "'");
  require(it->second.shape == expected_shape, ErrorCode::kShapeMismatch,
          "parameter '" + name + "' has shape " + shape_string(it->second.shape) + ", expected " +
              shape_string(expected_shape));
  return it->second.values;
}

std::vector<std::string> WeightBundle::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

void WeightBundle::validate_against(std::span<const ParamSpec> specs) const {
  std::set<std::string> expected;
  for (const ParamSpec& s : specs) {
    (void)get(s.name, s.shape);
    expected.insert(s.name);
  }
  for (const auto& [name, _] : params_) {
    require(expected.count(name) != 0, ErrorCode::kShapeMismatch, "unexpected parameter '" + name + "'");
  }
}

void WeightBundle::save(const std::filesystem::path& manifest_path) const {
  std::filesystem::path blob_path = manifest_path;
  blob_path.replace_extension(".bin");
  std::vector<float> blob;
  io::json params = io::json::array();
  for (const auto& [name, p] : params_) {
    params.push_back(
        {{"name", name}, {"shape", p.shape}, {"offset", blob.size() * sizeof(float)}, {"count", p.values.size()}});
    blob.insert(blob.end(), p.values.begin(), p.values.end());
  }
  io::write_f32(blob_path, blob);
  const io::json manifest{{"format", "pod4d-weights-v1"},
                          {"blob", blob_path.filename().string()},
                          {"dtype", "float32-le"},
                          {"params", params}};
  io::write_text_atomic(manifest_path, manifest.dump(2) + "\n");
}

WeightBundle WeightBundle::load(const std::filesystem::path& manifest_path) {
  const io::json manifest = io::read_json(manifest_path);
  WeightBundle bundle;
  try {
    require(manifest.value("format", "") == "pod4d-weights-v1", ErrorCode::kParse,
            "unsupported weight manifest format");
    const auto blob = io::read_f32(manifest_path.parent_path() / manifest.at("blob").get<std::string>());
    for (const auto& entry : manifest.at("params")) {
      const auto offset = entry.at("offset").get<std::size_t>();
      const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
      require(offset % sizeof(float) == 0, ErrorCode::kParse, "misaligned parameter offset");
      const std::size_t begin = offset / sizeof(float);
      const std::size_t count = ParamSpec{"", shape}.count();
      require(begin + count <= blob.size(), ErrorCode::kParse,
              "parameter '" + entry.at("name").get<std::string>() + "' extends past the blob");
      bundle.set(entry.at("name").get<std::string>(), shape,
                 std::vector<float>(blob.begin() + static_cast<std::ptrdiff_t>(begin),
                                    blob.begin() + static_cast<std::ptrdiff_t>(begin + count)));
    }
  } catch (const io::json::exception& e) {
    fail(ErrorCode::kParse, "malformed weight manifest '" + manifest_path.string() + "': " + e.what());
  }
  return bundle;
}

}  // namespace pod4d
