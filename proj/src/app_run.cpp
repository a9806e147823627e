#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "pod4d/app.hpp"
#include "pod4d/bevmap.hpp"
#include "pod4d/io.hpp"
#include "pod4d/parallel.hpp"

namespace pod4d::app {

using nlohmann::json;

namespace {

class Stopwatch {
 public:
  double lap_ms() {
    const auto now = std::chrono::steady_clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

std::vector<ParamSpec> vfe_specs(const RunConfig& cfg) {
  const std::int64_t in = cfg.grid().feature_channels(), out = cfg.vfe_channels;
  return {{"vfe.weight", {in, out}}, {"vfe.bias", {out}}};
}

WeightBundle without_prefix(const WeightBundle& all, const std::string& prefix) {
  WeightBundle sub;
  for (const std::string& name : all.names()) {
    if (name.starts_with(prefix)) continue;
    const auto values = all.get(name, all.shape(name));
    sub.set(name, all.shape(name), {values.begin(), values.end()});
  }
  return sub;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : (v[m - 1] + v[m]) / 2.0;
}

}  // namespace

std::vector<ParamSpec> pipeline_param_specs(const RunConfig& cfg) {
  std::vector<ParamSpec> specs = vfe_specs(cfg);
  const std::vector<ParamSpec> enc = cfg.pipeline == Pipeline::kSpconv4d
                                         ? sparse4d::spconv4d_param_specs(cfg.backbone)
                                         : window4d::dsvt4d_param_specs(cfg.dsvt, cfg.window);
  specs.insert(specs.end(), enc.begin(), enc.end());
  return specs;
}

WeightBundle init_pipeline_weights(const RunConfig& cfg) {
  WeightBundle bundle = cfg.pipeline == Pipeline::kSpconv4d
                            ? sparse4d::init_spconv4d_weights(cfg.backbone, cfg.seed)
                            : window4d::init_dsvt4d_weights(cfg.dsvt, cfg.window, cfg.seed);
  const auto in = static_cast<std::size_t>(cfg.grid().feature_channels());
  const auto out = static_cast<std::size_t>(cfg.vfe_channels);
  std::mt19937_64 rng(mix_seed(cfg.seed, 0xfe));
  std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(2.0 / static_cast<double>(in))));
  std::vector<float> w(in * out);
  for (float& v : w) v = dist(rng);
  bundle.set("vfe.weight", {static_cast<std::int64_t>(in), static_cast<std::int64_t>(out)}, std::move(w));
  bundle.set("vfe.bias", {static_cast<std::int64_t>(out)}, std::vector<float>(out, 0.0f));
  return bundle;
}

Model::Model(const RunConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.weights_path.empty()) {
    weights_ = init_pipeline_weights(cfg_);
    source_ = "seeded";
  } else {
    weights_ = WeightBundle::load(cfg_.weights_path);
    source_ = "file";
  }
  weights_.validate_against(specs());
  const auto spec = vfe_specs(cfg_);
  vfe_.in_channels = static_cast<int>(spec[0].shape[0]);
  vfe_.out_channels = static_cast<int>(spec[0].shape[1]);
  const auto w = weights_.get("vfe.weight", spec[0].shape);
  const auto b = weights_.get("vfe.bias", spec[1].shape);
  vfe_.weight.assign(w.begin(), w.end());
  vfe_.bias.assign(b.begin(), b.end());
  encoder_ = without_prefix(weights_, "vfe.");
  if (cfg_.pipeline == Pipeline::kDsvt4d) dsvt_layers_ = window4d::dsvt4d_layers(encoder_, cfg_.dsvt, cfg_.window);
}

std::vector<ParamSpec> Model::specs() const { return pipeline_param_specs(cfg_); }

FrameOutput Model::process(const sim::PointCloudFrame& frame, int threads) const {
  FrameOutput out;
  Stopwatch clock;
  const preprocess::GroundResult ground = preprocess::extract_ground(frame, cfg_.ground);
  out.times.ground_ms = clock.lap_ms();
  const preprocess::CompensationResult comp = preprocess::compensate_velocity(frame, ground.mask, cfg_.velocity_method);
  out.degraded = comp.degraded;
  out.times.compensate_ms = clock.lap_ms();
  const preprocess::TwoFramePoints tf =
      preprocess::generate_virtual_future(comp.points, cfg_.horizon, frame.sensor_origin);
  out.times.extrapolate_ms = clock.lap_ms();
  const voxelizer::VoxelGridConfig& grid = cfg_.grid();
  const voxelizer::Voxel4DSet vox = voxelizer::voxelize_4d(tf, grid);
  out.voxels = vox.tensor.size();
  out.times.voxelize_ms = clock.lap_ms();
  const SparseTensor4D x = voxelizer::project_features(vox.tensor, vfe_);
  out.times.vfe_ms = clock.lap_ms();

  SparseTensor4D y;
  bevmap::Compression compression = bevmap::Compression::kMaxOverZ;
  if (cfg_.pipeline == Pipeline::kSpconv4d) {
    y = sparse4d::spconv4d_backbone(x, encoder_, cfg_.backbone, nullptr, threads);
    compression = bevmap::Compression::kConcatOverZ;
  } else {
    y = window4d::dsvt4d_block(x, dsvt_layers_, cfg_.window, threads);
    if (y.spatial_shape[2] > 1) y = window4d::pool_4d(y, true, false);
  }
  out.encoded_sites = y.size();
  out.times.encoder_ms = clock.lap_ms();

  bevmap::BevGeometry geometry;
  for (int a = 0; a < 2; ++a) {
    geometry.resolution[static_cast<std::size_t>(a)] =
        grid.voxel_size[static_cast<std::size_t>(a)] * grid.grid_shape[a] / y.spatial_shape[a];
    geometry.origin[static_cast<std::size_t>(a)] = grid.origin[static_cast<std::size_t>(a)];
  }
  auto [cur, fut] = bevmap::separate_temporal(y);
  out.bev_current = bevmap::densify_bev(cur, compression, geometry);
  out.bev_future = bevmap::densify_bev(fut, compression, geometry);
  out.bev_current.time_tag = TimeTag::kCurrent;
  out.bev_future.time_tag = TimeTag::kFuture;
  out.bev_future.delta_t = cfg_.horizon;
  out.times.bev_ms = clock.lap_ms();

  decode::DecodeParams params = cfg_.decode;
  if (ground.sufficient) {
    params.ground_normal = ground.normal;
    params.ground_offset = ground.offset;
  }
  decode::FrameContext ctx{frame.frame_id, frame.timestamp, nullptr, nullptr};
  if (cfg_.bev_gating) {
    ctx.support_current = &out.bev_current;
    ctx.support_future = &out.bev_future;
  }
  out.boxes = decode::decode_frame(tf, params, ctx);
  out.times.decode_ms = clock.lap_ms();
  return out;
}

RunSummary run_pipeline(const RunConfig& cfg, const fs::path& dataset_dir, const fs::path& out_dir) {
  cfg.validate();
  const DatasetSummary dataset = read_manifest(dataset_dir);
  const Model model(cfg);
  std::error_code ec;
  fs::create_directories(out_dir / "detections", ec);
  require(!ec, ErrorCode::kIo, "cannot create '" + (out_dir / "detections").string() + "'");
  if (cfg.dump_bev) fs::create_directories(out_dir / "bev", ec);

  const std::size_t n = dataset.frames.size();
  const int workers = resolve_workers(cfg.workers);
  const int inner_threads = n == 0 ? 1 : std::max(1, workers / static_cast<int>(std::min<std::size_t>(n, workers)));
  std::vector<StageTimes> times(n);
  std::vector<std::string> errors(n);
  std::vector<std::size_t> voxels(n), sites(n), current(n), future(n);
  parallel_for(n, std::min<std::size_t>(n, workers), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const std::string& id = dataset.frames[i].id;
      try {
        sim::PointCloudFrame frame = io::read_frame(dataset_dir / "frames" / (id + ".bin"));
        frame.frame_id = id;
        FrameOutput result = model.process(frame, inner_threads);
        std::vector<DetectionBox> boxes = result.boxes.current;
        boxes.insert(boxes.end(), result.boxes.future.begin(), result.boxes.future.end());
        io::write_boxes(out_dir / "detections" / (id + ".jsonl"), boxes, io::BoxRecord::kDetection);
        if (cfg.dump_bev) {
          bevmap::write_bev(result.bev_current, out_dir / "bev" / (id + "_t0.bev"));
          bevmap::write_bev(result.bev_future, out_dir / "bev" / (id + "_t1.bev"));
        }
        times[i] = result.times;
        voxels[i] = result.voxels;
        sites[i] = result.encoded_sites;
        current[i] = result.boxes.current.size();
        future[i] = result.boxes.future.size();
        if (current[i] != future[i]) {
          spdlog::info("frame {}: {} current vs {} future boxes (cluster merge or split)", id, current[i], future[i]);
        }
      } catch (const std::exception& e) {
        errors[i] = e.what();
        spdlog::error("frame {} failed: {}", id, e.what());
      }
    }
  });

  RunSummary summary;
  json frame_times = json::array();
  std::vector<double> totals, per_stage[8];
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      summary.failures.emplace_back(dataset.frames[i].id, errors[i]);
      continue;
    }
    ++summary.frames;
    const StageTimes& t = times[i];
    const double stage[8] = {t.ground_ms, t.compensate_ms, t.extrapolate_ms, t.voxelize_ms,
                             t.vfe_ms,    t.encoder_ms,    t.bev_ms,         t.decode_ms};
    for (int s = 0; s < 8; ++s) per_stage[s].push_back(stage[s]);
    totals.push_back(t.total());
    frame_times.push_back({{"frame", dataset.frames[i].id},
                           {"voxels", voxels[i]},
                           {"encoded_sites", sites[i]},
                           {"stages_ms", stage},
                           {"total_ms", t.total()}});
  }
  static const char* kStages[8] = {"ground", "compensate", "extrapolate", "voxelize",
                                   "vfe",    "encoder",    "bev",         "decode"};
  json medians = json::object();
  for (int s = 0; s < 8; ++s) medians[kStages[s]] = median(per_stage[s]);
  const double total_median = median(totals);
  const json timings{{"pipeline", pipeline_name(cfg.pipeline)},
                     {"stages", kStages},
                     {"median_ms", medians},
                     {"table",
                      {{{"network", cfg.pipeline == Pipeline::kSpconv4d ? "SpConv4D" : "DSVT4D"},
                        {"inference_ms", total_median},
                        {"encoder_ms", medians[kStages[5]]},
                        {"fps", total_median > 0 ? 1000.0 / total_median : 0.0}}}},
                     {"frames", frame_times}};
  io::write_text_atomic(out_dir / "timings.json", timings.dump(2) + "\n");

  json failures = json::array();
  for (const auto& [id, msg] : summary.failures) failures.push_back({{"frame", id}, {"error", msg}});
  const json manifest{{"format", "pod4d-run-v1"},
                      {"pipeline", pipeline_name(cfg.pipeline)},
                      {"horizon", cfg.horizon},
                      {"seed", cfg.seed},
                      {"weights",
                       {{"source", model.source()},
                        {"path", cfg.weights_path},
                        {"seed", cfg.seed},
                        {"parameters", model.weights().size()}}},
                      {"frames", n},
                      {"frames_ok", summary.frames},
                      {"failures", failures},
                      {"config", cfg.to_json()}};
  io::write_text_atomic(out_dir / "run_manifest.json", manifest.dump(2) + "\n");
  spdlog::info("{} run: {} of {} frames, median {:.1f} ms per frame", pipeline_name(cfg.pipeline), summary.frames, n,
               total_median);
  return summary;
}

}  // namespace pod4d::app
