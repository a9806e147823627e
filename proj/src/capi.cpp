#include <spdlog/cfg/env.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstring>
#include <mutex>
#include <string>

#include "pod4d/app.hpp"
#include "pod4d/eval.hpp"
#include "pod4d/io.hpp"
#include "pod4d/pod4d.h"
#include "pod4d/preprocess.hpp"
#include "pod4d/render.hpp"

struct pod4d_config {
  pod4d::RunConfig cfg;
};

struct pod4d_frame {
  pod4d::sim::PointCloudFrame frame;
};

struct pod4d_two_frame {
  pod4d::preprocess::TwoFramePoints points;
};

namespace {

thread_local std::string g_last_error;

// Library logs go to stderr; SPDLOG_LEVEL adjusts verbosity.
void init_logging() {
  static std::once_flag once;
  std::call_once(once, [] {
    spdlog::set_default_logger(spdlog::stderr_color_mt("pod4d"));
    spdlog::cfg::load_env_levels();
  });
}

template <class Fn>
pod4d_status guarded(Fn&& fn) {
  init_logging();
  g_last_error.clear();
  try {
    fn();
    return POD4D_OK;
  } catch (const pod4d::Error& e) {
    g_last_error = e.what();
    return static_cast<pod4d_status>(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return POD4D_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return POD4D_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  pod4d::require(p != nullptr, pod4d::ErrorCode::kInvalidArgument, std::string(what) + " must not be NULL");
}

pod4d::DetectionBox box_from(const double v[7]) {
  pod4d::DetectionBox b;
  b.center = {v[0], v[1], v[2]};
  b.dims = {v[3], v[4], v[5]};
  b.yaw = v[6];
  return b;
}

}  // namespace

extern "C" {

POD4D_EXPORT const char* pod4d_version(void) { return "0.1.0"; }

POD4D_EXPORT const char* pod4d_status_name(pod4d_status status) {
  switch (status) {
    case POD4D_OK:
      return "ok";
    case POD4D_ERR_INVALID_ARGUMENT:
      return "invalid_argument";
    case POD4D_ERR_IO:
      return "io";
    case POD4D_ERR_PARSE:
      return "parse";
    case POD4D_ERR_SHAPE_MISMATCH:
      return "shape_mismatch";
    case POD4D_ERR_CONFIG:
      return "config";
    case POD4D_ERR_PLACEMENT:
      return "placement";
    case POD4D_ERR_INTERNAL:
      return "internal";
  }
  return "unknown";
}

POD4D_EXPORT const char* pod4d_last_error(void) { return g_last_error.c_str(); }

POD4D_EXPORT pod4d_status pod4d_config_default(pod4d_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new pod4d_config{};
  });
}

POD4D_EXPORT pod4d_status pod4d_config_load(const char* path, pod4d_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new pod4d_config{pod4d::load_run_config(path)};
  });
}

POD4D_EXPORT pod4d_status pod4d_config_merge_json(pod4d_config* cfg, const char* json_text) {
  return guarded([&] {
    need(cfg, "cfg");
    need(json_text, "json_text");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      pod4d::fail(pod4d::ErrorCode::kParse, std::string("invalid JSON: ") + e.what());
    }
    pod4d::RunConfig merged = pod4d::config_from_json(j, cfg->cfg);
    merged.validate();
    cfg->cfg = std::move(merged);
  });
}

POD4D_EXPORT pod4d_status pod4d_config_set_pipeline(pod4d_config* cfg, const char* pipeline) {
  return guarded([&] {
    need(cfg, "cfg");
    need(pipeline, "pipeline");
    cfg->cfg.pipeline = pod4d::pipeline_from_name(pipeline);
  });
}

POD4D_EXPORT pod4d_status pod4d_config_set_horizon(pod4d_config* cfg, double seconds) {
  return guarded([&] {
    need(cfg, "cfg");
    pod4d::require(seconds > 0.0, pod4d::ErrorCode::kConfig, "horizon must be > 0");
    cfg->cfg.horizon = seconds;
  });
}

POD4D_EXPORT pod4d_status pod4d_config_set_seed(pod4d_config* cfg, uint64_t seed) {
  return guarded([&] {
    need(cfg, "cfg");
    cfg->cfg.seed = seed;
  });
}

POD4D_EXPORT pod4d_status pod4d_config_set_workers(pod4d_config* cfg, int workers) {
  return guarded([&] {
    need(cfg, "cfg");
    pod4d::require(workers >= 0, pod4d::ErrorCode::kConfig, "workers must be >= 0");
    cfg->cfg.workers = workers;
  });
}

POD4D_EXPORT pod4d_status pod4d_config_to_json(const pod4d_config* cfg, char* buffer, size_t capacity, size_t* needed) {
  return guarded([&] {
    need(cfg, "cfg");
    const std::string text = cfg->cfg.to_json().dump(2);
    if (needed) *needed = text.size() + 1;
    if (!buffer) return;
    pod4d::require(capacity > text.size(), pod4d::ErrorCode::kInvalidArgument, "buffer too small");
    std::memcpy(buffer, text.c_str(), text.size() + 1);
  });
}

POD4D_EXPORT void pod4d_config_free(pod4d_config* cfg) { delete cfg; }

POD4D_EXPORT pod4d_status pod4d_simulate(const pod4d_config* cfg, const char* out_dir) {
  return guarded([&] {
    need(cfg, "cfg");
    need(out_dir, "out_dir");
    pod4d::app::simulate_dataset(cfg->cfg, out_dir);
  });
}

POD4D_EXPORT pod4d_status pod4d_run(const pod4d_config* cfg, const char* dataset_dir, const char* out_dir,
                                    size_t* failed_frames) {
  return guarded([&] {
    need(cfg, "cfg");
    need(dataset_dir, "dataset_dir");
    need(out_dir, "out_dir");
    const auto summary = pod4d::app::run_pipeline(cfg->cfg, dataset_dir, out_dir);
    if (failed_frames) *failed_frames = summary.failures.size();
  });
}

POD4D_EXPORT pod4d_status pod4d_eval(const pod4d_config* cfg, const char* det_dir, const char* dataset_dir,
                                     const char* task, const char* out_dir, double* mean_ap) {
  return guarded([&] {
    need(cfg, "cfg");
    need(det_dir, "det_dir");
    need(dataset_dir, "dataset_dir");
    need(task, "task");
    need(out_dir, "out_dir");
    const auto report =
        pod4d::app::evaluate_dataset(cfg->cfg, det_dir, dataset_dir, pod4d::eval::task_from_name(task), out_dir);
    if (mean_ap) *mean_ap = report.mean_ap.value_or(-1.0);
  });
}

POD4D_EXPORT pod4d_status pod4d_bench(const pod4d_config* cfg, const char* out_dir) {
  return guarded([&] {
    need(cfg, "cfg");
    need(out_dir, "out_dir");
    pod4d::app::run_bench(cfg->cfg, out_dir);
  });
}

POD4D_EXPORT pod4d_status pod4d_render(const pod4d_config* cfg, const char* frame_bin, const char* boxes_jsonl,
                                       const char* gt_jsonl, const char* out_image, double horizon) {
  return guarded([&] {
    need(cfg, "cfg");
    need(out_image, "out_image");
    auto path = [](const char* p) { return p ? std::filesystem::path(p) : std::filesystem::path(); };
    pod4d::render::render_files(cfg->cfg, path(frame_bin), path(boxes_jsonl), path(gt_jsonl), out_image, horizon);
  });
}

POD4D_EXPORT pod4d_status pod4d_frame_load(const char* bin_path, pod4d_frame** out) {
  return guarded([&] {
    need(bin_path, "bin_path");
    need(out, "out");
    *out = new pod4d_frame{pod4d::io::read_frame(bin_path)};
  });
}

POD4D_EXPORT size_t pod4d_frame_num_points(const pod4d_frame* frame) { return frame ? frame->frame.points.size() : 0; }

POD4D_EXPORT pod4d_status pod4d_frame_points(const pod4d_frame* frame, float* out, size_t capacity) {
  return guarded([&] {
    need(frame, "frame");
    need(out, "out");
    const auto& pts = frame->frame.points;
    pod4d::require(capacity >= pts.size() * 5, pod4d::ErrorCode::kInvalidArgument, "buffer too small");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const float row[5] = {static_cast<float>(pts[i].x), static_cast<float>(pts[i].y), static_cast<float>(pts[i].z),
                            static_cast<float>(pts[i].intensity), static_cast<float>(pts[i].v)};
      std::memcpy(out + 5 * i, row, sizeof(row));
    }
  });
}

POD4D_EXPORT void pod4d_frame_free(pod4d_frame* frame) { delete frame; }

POD4D_EXPORT pod4d_status pod4d_preprocess(const pod4d_config* cfg, const pod4d_frame* frame, pod4d_two_frame** out) {
  return guarded([&] {
    need(cfg, "cfg");
    need(frame, "frame");
    need(out, "out");
    namespace pp = pod4d::preprocess;
    const auto ground = pp::extract_ground(frame->frame, cfg->cfg.ground);
    const auto comp = pp::compensate_velocity(frame->frame, ground.mask, cfg->cfg.velocity_method);
    *out = new pod4d_two_frame{pp::generate_virtual_future(comp.points, cfg->cfg.horizon, frame->frame.sensor_origin)};
  });
}

POD4D_EXPORT size_t pod4d_two_frame_num_records(const pod4d_two_frame* tf) {
  return tf ? tf->points.records.size() : 0;
}

POD4D_EXPORT pod4d_status pod4d_two_frame_records(const pod4d_two_frame* tf, float* out, size_t capacity) {
  return guarded([&] {
    need(tf, "tf");
    need(out, "out");
    const auto& recs = tf->points.records;
    pod4d::require(capacity >= recs.size() * 7, pod4d::ErrorCode::kInvalidArgument, "buffer too small");
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const auto& r = recs[i];
      const float row[7] = {static_cast<float>(r.position.x()),
                            static_cast<float>(r.position.y()),
                            static_cast<float>(r.position.z()),
                            static_cast<float>(r.intensity),
                            static_cast<float>(r.v_abs),
                            static_cast<float>(r.t_label),
                            0.0f};
      std::memcpy(out + 7 * i, row, sizeof(row));
    }
  });
}

POD4D_EXPORT void pod4d_two_frame_free(pod4d_two_frame* tf) { delete tf; }

POD4D_EXPORT pod4d_status pod4d_iou_3d(const double a[7], const double b[7], double* out) {
  return guarded([&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    *out = pod4d::eval::iou_3d(box_from(a), box_from(b));
  });
}

}  // extern "C"
