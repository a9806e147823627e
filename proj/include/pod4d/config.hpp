#pragma once

#include <cstdint>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "pod4d/decode.hpp"
#include "pod4d/eval.hpp"
#include "pod4d/preprocess.hpp"
#include "pod4d/sim.hpp"
#include "pod4d/sparse4d.hpp"
#include "pod4d/voxelizer.hpp"
#include "pod4d/window4d.hpp"

namespace pod4d {

enum class Pipeline { kSpconv4d, kDsvt4d };

const char* pipeline_name(Pipeline p);
Pipeline pipeline_from_name(const std::string& name);

struct DatasetConfig {
  int scenes = 10;
  int frames_per_scene = 100;
  std::vector<double> horizons{0.1, 0.2, 0.5};  // future annotations written per frame
};

struct BenchConfig {
  std::vector<int> sizes{10'000, 20'000, 50'000, 100'000, 200'000, 500'000};
  int repeats = 3;
  double density = 0.05;  // active fraction of the synthetic grid
  int conv_channels = 16;
  int attention_channels = 16;
  int attention_heads = 2;
  int attention_ffn = 32;
};

struct RenderConfig {
  double resolution = 0.1;  // meters per pixel
  double x_min = 0.0;
  double x_max = 100.0;
  double y_min = -40.0;
  double y_max = 40.0;
};

inline sim::SceneConfig default_scene() {
  sim::SceneConfig s;
  s.classes = sim::SceneConfig::default_classes();
  return s;
}

// Everything a command needs. Loaded from JSON; absent keys keep these defaults.
struct RunConfig {
  std::uint64_t seed = 0;
  Pipeline pipeline = Pipeline::kSpconv4d;
  double horizon = 0.5;
  int workers = 0;  // 0: POD4D_WORKERS, then hardware concurrency

  sim::LidarModel lidar;
  sim::SceneConfig scene = default_scene();
  DatasetConfig dataset;

  preprocess::GroundParams ground;
  preprocess::VelocityMethod velocity_method = preprocess::VelocityMethod::kGroundMean;

  voxelizer::VoxelGridConfig spconv_grid = voxelizer::VoxelGridConfig::spconv4d_default();
  voxelizer::VoxelGridConfig pillar_grid = voxelizer::VoxelGridConfig::pillar_default();
  int vfe_channels = 64;
  sparse4d::BackboneConfig backbone;
  window4d::WindowConfig window;
  window4d::Dsvt4dConfig dsvt;
  std::string weights_path;  // empty: seeded initialization

  decode::DecodeParams decode;
  bool bev_gating = true;
  bool dump_bev = false;

  eval::EvalConfig eval;
  BenchConfig bench;
  RenderConfig render;

  void validate() const;
  const voxelizer::VoxelGridConfig& grid() const { return pipeline == Pipeline::kSpconv4d ? spconv_grid : pillar_grid; }
  nlohmann::json to_json() const;
};

// Overlays `j` on `base`; unknown top-level keys are rejected.
RunConfig config_from_json(const nlohmann::json& j, const RunConfig& base = {});
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace pod4d
