#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <span>
#include <string>
#include <vector>

#include "pod4d/box.hpp"
#include "pod4d/sim.hpp"

namespace pod4d::io {

namespace fs = std::filesystem;
using nlohmann::json;

// Little-endian float32 blobs.
void write_f32(const fs::path& path, std::span<const float> values);
std::vector<float> read_f32(const fs::path& path);

// Writes via a temporary sibling and renames, so readers never see partial files.
void write_text_atomic(const fs::path& path, const std::string& text);
void write_bytes_atomic(const fs::path& path, std::span<const char> bytes);
std::string read_text(const fs::path& path);

json read_json(const fs::path& path);

json to_json(const sim::LidarModel& m);
sim::LidarModel lidar_from_json(const json& j);
json to_json(const sim::Scene& s);
json to_json(const Pose& p);
Pose pose_from_json(const json& j);

// Point cloud: <stem>.bin holds N x 5 float32 (x, y, z, i, v); <stem>.json the metadata.
void write_frame(const sim::PointCloudFrame& frame, const fs::path& bin_path);
sim::PointCloudFrame read_frame(const fs::path& bin_path);
fs::path sidecar_path(const fs::path& bin_path);

// One box per JSON line. Detections carry score/time_tag/horizon in addition.
enum class BoxRecord { kAnnotation, kDetection };
json box_to_json(const DetectionBox& b, BoxRecord kind);
DetectionBox box_from_json(const json& j);
void write_boxes(const fs::path& path, std::span<const DetectionBox> boxes, BoxRecord kind);
std::vector<DetectionBox> read_boxes(const fs::path& path);

}  // namespace pod4d::io
