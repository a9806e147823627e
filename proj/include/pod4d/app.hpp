#pragma once

#include <filesystem>
#include <map>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "pod4d/config.hpp"
#include "pod4d/decode.hpp"
#include "pod4d/eval.hpp"

namespace pod4d::app {

namespace fs = std::filesystem;

struct FrameEntry {
  std::string id;
  int scene = 0;
  int index = 0;
  double timestamp = 0.0;
};

// Dataset layout:
//   manifest.json                 frame list, horizons, seed, configuration
//   scenes/<scene>.json           actor tracks
//   frames/<id>.bin, <id>.json    point cloud and metadata
//   annotations/<id>.jsonl        boxes at t_query = t_ref and at every horizon, in the frame at t_ref
struct DatasetSummary {
  std::vector<FrameEntry> frames;
  std::vector<double> horizons;
};

std::string frame_id(int scene, int index);

DatasetSummary simulate_dataset(const RunConfig& cfg, const fs::path& out_dir);
DatasetSummary read_manifest(const fs::path& dataset_dir);

// Annotated boxes for one frame of a scene: everything whose center lies inside the
// sensor wedge and range at t_ref, with num_points counted from the scan at t_query.
std::vector<DetectionBox> annotate_frame(const sim::Scene& scene, double t_ref, const std::vector<double>& horizons,
                                         const sim::LidarModel& lidar, std::uint64_t scan_seed,
                                         const sim::PointCloudFrame* current_scan = nullptr);

struct StageTimes {
  double ground_ms = 0, compensate_ms = 0, extrapolate_ms = 0, voxelize_ms = 0, vfe_ms = 0, encoder_ms = 0, bev_ms = 0,
         decode_ms = 0;
  double total() const {
    return ground_ms + compensate_ms + extrapolate_ms + voxelize_ms + vfe_ms + encoder_ms + bev_ms + decode_ms;
  }
};

struct FrameOutput {
  decode::DecodeResult boxes;
  StageTimes times;
  std::size_t voxels = 0;
  std::size_t encoded_sites = 0;
  bool degraded = false;
  bevmap::BevMap bev_current;
  bevmap::BevMap bev_future;
};

// Encoder parameters for the configured pipeline, including the voxel feature projection.
class Model {
 public:
  explicit Model(const RunConfig& cfg);

  const WeightBundle& weights() const { return weights_; }
  std::string source() const { return source_; }
  std::vector<ParamSpec> specs() const;

  FrameOutput process(const sim::PointCloudFrame& frame, int threads = 1) const;

 private:
  RunConfig cfg_;
  WeightBundle weights_;
  WeightBundle encoder_;
  std::string source_;
  voxelizer::LinearParams vfe_;
  std::vector<window4d::Dsvt4dLayer> dsvt_layers_;
};

std::vector<ParamSpec> pipeline_param_specs(const RunConfig& cfg);
WeightBundle init_pipeline_weights(const RunConfig& cfg);

struct RunSummary {
  std::size_t frames = 0;
  std::vector<std::pair<std::string, std::string>> failures;  // frame id, message
};

// Writes detections/<id>.jsonl, timings.json and run_manifest.json under out_dir.
RunSummary run_pipeline(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir);

eval::FrameBoxes load_box_dir(const fs::path& dir);

// Reads detections from det_dir (or det_dir/detections) and annotations from the
// dataset, writes report.json and report.txt into out_dir.
eval::EvalReport evaluate_dataset(const RunConfig& cfg, const fs::path& det_dir, const fs::path& dataset_dir,
                                  eval::Task task, const fs::path& out_dir);

nlohmann::json run_bench(const RunConfig& cfg, const fs::path& out_dir);

// Log-log least-squares slope; sizes or times <= 0 are skipped.
double loglog_slope(const std::vector<double>& sizes, const std::vector<double>& times);

}  // namespace pod4d::app
