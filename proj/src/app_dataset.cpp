#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <map>
#include <numbers>

#include "pod4d/app.hpp"
#include "pod4d/io.hpp"
#include "pod4d/parallel.hpp"

namespace pod4d::app {

using nlohmann::json;

std::string frame_id(int scene, int index) { return fmt::format("s{:04d}_f{:04d}", scene, index); }

std::vector<DetectionBox> annotate_frame(const sim::Scene& scene, double t_ref, const std::vector<double>& horizons,
                                         const sim::LidarModel& lidar, std::uint64_t scan_seed,
                                         const sim::PointCloudFrame* current_scan) {
  const double half_fov = lidar.fov_h_deg * std::numbers::pi / 360.0;
  std::vector<double> offsets{0.0};
  offsets.insert(offsets.end(), horizons.begin(), horizons.end());
  std::vector<DetectionBox> out;
  for (std::size_t k = 0; k < offsets.size(); ++k) {
    const double t_query = t_ref + offsets[k];
    sim::PointCloudFrame scan;
    const sim::PointCloudFrame* counted = current_scan;
    if (k != 0 || !counted) {
      scan = sim::scan_frame(scene, t_query, lidar, mix_seed(scan_seed, 0x100 + k));
      counted = &scan;
    }
    std::map<int, int> hits;
    for (int id : counted->source_ids) {
      if (id >= 0) ++hits[id];
    }
    for (DetectionBox& b : sim::ground_truth_boxes(scene, t_query, t_ref)) {
      const double az = std::atan2(b.center.y(), b.center.x());
      if (std::abs(az) > half_fov || b.center.head<2>().norm() > lidar.max_range) continue;
      auto it = hits.find(b.actor_id);
      b.num_points = it == hits.end() ? 0 : it->second;
      out.push_back(b);
    }
  }
  return out;
}

DatasetSummary simulate_dataset(const RunConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir / "frames", ec);
  fs::create_directories(out_dir / "annotations", ec);
  fs::create_directories(out_dir / "scenes", ec);
  require(!ec && fs::is_directory(out_dir), ErrorCode::kIo,
          "cannot create dataset directory '" + out_dir.string() + "'");

  std::vector<sim::Scene> scenes;
  for (int s = 0; s < cfg.dataset.scenes; ++s) {
    scenes.push_back(sim::generate_scene(cfg.scene, mix_seed(cfg.seed, static_cast<std::uint64_t>(s))));
    io::write_text_atomic(out_dir / "scenes" / fmt::format("s{:04d}.json", s),
                          io::to_json(scenes.back()).dump(2) + "\n");
  }

  DatasetSummary summary;
  summary.horizons = cfg.dataset.horizons;
  for (int s = 0; s < cfg.dataset.scenes; ++s) {
    for (int f = 0; f < cfg.dataset.frames_per_scene; ++f) {
      summary.frames.push_back({frame_id(s, f), s, f, f / cfg.lidar.rate_hz});
    }
  }

  const int workers = resolve_workers(cfg.workers);
  parallel_for(summary.frames.size(), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const FrameEntry& e = summary.frames[i];
      const sim::Scene& scene = scenes[static_cast<std::size_t>(e.scene)];
      const std::uint64_t seed = mix_seed(scene.rng_seed, 1 + static_cast<std::uint64_t>(e.index));
      sim::PointCloudFrame frame = sim::scan_frame(scene, e.timestamp, cfg.lidar, seed);
      frame.frame_id = e.id;
      io::write_frame(frame, out_dir / "frames" / (e.id + ".bin"));
      std::vector<DetectionBox> boxes =
          annotate_frame(scene, e.timestamp, cfg.dataset.horizons, cfg.lidar, seed, &frame);
      for (DetectionBox& b : boxes) b.frame_ref = e.id;
      io::write_boxes(out_dir / "annotations" / (e.id + ".jsonl"), boxes, io::BoxRecord::kAnnotation);
    }
  });

  json frames = json::array();
  for (const FrameEntry& e : summary.frames) {
    frames.push_back({{"id", e.id}, {"scene", e.scene}, {"index", e.index}, {"timestamp", e.timestamp}});
  }
  const json manifest{{"format", "pod4d-dataset-v1"},
                      {"seed", cfg.seed},
                      {"scenes", cfg.dataset.scenes},
                      {"frames_per_scene", cfg.dataset.frames_per_scene},
                      {"rate_hz", cfg.lidar.rate_hz},
                      {"horizons", cfg.dataset.horizons},
                      {"frames", frames},
                      {"config", cfg.to_json()}};
  io::write_text_atomic(out_dir / "manifest.json", manifest.dump(2) + "\n");
  spdlog::info("simulated {} scenes, {} frames into {}", cfg.dataset.scenes, summary.frames.size(), out_dir.string());
  return summary;
}

DatasetSummary read_manifest(const fs::path& dataset_dir) {
  const json m = io::read_json(dataset_dir / "manifest.json");
  DatasetSummary summary;
  try {
    require(m.value("format", "") == "pod4d-dataset-v1", ErrorCode::kParse,
            "'" + dataset_dir.string() + "' is not a pod4d dataset");
    summary.horizons = m.at("horizons").get<std::vector<double>>();
    for (const json& f : m.at("frames")) {
      summary.frames.push_back({f.at("id").get<std::string>(), f.at("scene").get<int>(), f.at("index").get<int>(),
                                f.at("timestamp").get<double>()});
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "malformed dataset manifest: " + std::string(e.what()));
  }
  return summary;
}

}  // namespace pod4d::app
