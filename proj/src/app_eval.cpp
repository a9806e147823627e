#include <spdlog/spdlog.h>

#include "pod4d/app.hpp"
#include "pod4d/io.hpp"

namespace pod4d::app {

eval::FrameBoxes load_box_dir(const fs::path& dir) {
  require(fs::is_directory(dir), ErrorCode::kIo, "'" + dir.string() + "' is not a directory");
  eval::FrameBoxes out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".jsonl") {
      out[entry.path().stem().string()] = io::read_boxes(entry.path());
    }
  }
  return out;
}

eval::EvalReport evaluate_dataset(const RunConfig& cfg, const fs::path& det_dir, const fs::path& dataset_dir,
                                  eval::Task task, const fs::path& out_dir) {
  const DatasetSummary dataset = read_manifest(dataset_dir);
  eval::FrameBoxes gt;
  for (const FrameEntry& e : dataset.frames) {
    gt[e.id] = io::read_boxes(dataset_dir / "annotations" / (e.id + ".jsonl"));
  }
  const fs::path nested = det_dir / "detections";
  const eval::FrameBoxes dets = load_box_dir(fs::is_directory(nested) ? nested : det_dir);

  double horizon = cfg.horizon;
  if (fs::exists(det_dir / "run_manifest.json")) {
    horizon = io::read_json(det_dir / "run_manifest.json").value("horizon", horizon);
  }
  eval::EvalReport report = eval::evaluate_run(dets, gt, task, horizon, cfg.eval);
  for (const std::string& id : report.missing_detection_frames) spdlog::warn("no detections for frame {}", id);
  for (const std::string& id : report.unexpected_detection_frames) {
    spdlog::warn("detections for frame {} have no annotations", id);
  }
  io::write_text_atomic(out_dir / "report.json", report.to_json().dump(2) + "\n");
  io::write_text_atomic(out_dir / "report.txt", report.to_table());
  return report;
}

}  // namespace pod4d::app
