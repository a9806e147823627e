#include "pod4d/io.hpp"

#include <bit>
#include <fstream>
#include <sstream>
#include <system_error>

namespace pod4d::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void write_bytes_atomic(const fs::path& path, std::span<const char> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::kIo, "cannot open '" + tmp.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::kIo, "write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorCode::kIo, "cannot rename '" + tmp.string() + "': " + ec.message());
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  write_bytes_atomic(path, std::span<const char>(text.data(), text.size()));
}

void write_f32(const fs::path& path, std::span<const float> values) {
  write_bytes_atomic(path, std::span<const char>(reinterpret_cast<const char*>(values.data()), values.size_bytes()));
}

std::vector<float> read_f32(const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open '" + path.string() + "'");
  const auto size = static_cast<std::size_t>(in.tellg());
  require(size % sizeof(float) == 0, ErrorCode::kParse, "'" + path.string() + "' is not a float32 array");
  std::vector<float> values(size / sizeof(float));
  in.seekg(0);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(size));
  require(static_cast<bool>(in), ErrorCode::kIo, "read failed for '" + path.string() + "'");
  return values;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, "invalid JSON in '" + path.string() + "': " + e.what());
  }
}

json to_json(const sim::LidarModel& m) {
  return json{{"channels", m.channels},
              {"fov_h", m.fov_h_deg},
              {"fov_v", m.fov_v_deg},
              {"elevation_center", m.elevation_center_deg},
              {"angular_resolution", m.angular_resolution_deg},
              {"max_range", m.max_range},
              {"rate", m.rate_hz},
              {"noise_sigma_range", m.noise_sigma_range},
              {"noise_sigma_vel", m.noise_sigma_vel}};
}

sim::LidarModel lidar_from_json(const json& j) {
  sim::LidarModel m;
  m.channels = j.value("channels", m.channels);
  m.fov_h_deg = j.value("fov_h", m.fov_h_deg);
  m.fov_v_deg = j.value("fov_v", m.fov_v_deg);
  m.elevation_center_deg = j.value("elevation_center", m.elevation_center_deg);
  m.angular_resolution_deg = j.value("angular_resolution", m.angular_resolution_deg);
  m.max_range = j.value("max_range", m.max_range);
  m.rate_hz = j.value("rate", m.rate_hz);
  m.noise_sigma_range = j.value("noise_sigma_range", m.noise_sigma_range);
  m.noise_sigma_vel = j.value("noise_sigma_vel", m.noise_sigma_vel);
  m.validate();
  return m;
}

json to_json(const Pose& p) { return json{{"x", p.x}, {"y", p.y}, {"z", p.z}, {"yaw", p.yaw}}; }

Pose pose_from_json(const json& j) {
  return Pose{j.value("x", 0.0), j.value("y", 0.0), j.value("z", 0.0), j.value("yaw", 0.0)};
}

json to_json(const sim::Scene& s) {
  auto track = [](const sim::ActorTrack& a) {
    return json{{"id", a.id},
                {"class", class_name(a.cls)},
                {"dims", {a.dims.x(), a.dims.y(), a.dims.z()}},
                {"pose0", to_json(a.pose0)},
                {"velocity", {a.velocity.x(), a.velocity.y()}},
                {"yaw_rate", a.yaw_rate}};
  };
  json actors = json::array();
  for (const auto& a : s.actors) actors.push_back(track(a));
  return json{{"actors", actors},
              {"ego", track(s.ego)},
              {"ground_z", s.ground_z},
              {"extent", {s.extent.x_min, s.extent.x_max, s.extent.y_min, s.extent.y_max}},
              {"rng_seed", s.rng_seed}};
}

fs::path sidecar_path(const fs::path& bin_path) {
  fs::path p = bin_path;
  p.replace_extension(".json");
  return p;
}

void write_frame(const sim::PointCloudFrame& frame, const fs::path& bin_path) {
  std::vector<float> blob;
  blob.reserve(frame.points.size() * 5);
  for (const auto& p : frame.points) {
    blob.push_back(static_cast<float>(p.x));
    blob.push_back(static_cast<float>(p.y));
    blob.push_back(static_cast<float>(p.z));
    blob.push_back(static_cast<float>(p.intensity));
    blob.push_back(static_cast<float>(p.v));
  }
  write_f32(bin_path, blob);
  const json meta{
      {"frame_id", frame.frame_id},
      {"timestamp", frame.timestamp},
      {"num_points", frame.points.size()},
      {"sensor_origin", {frame.sensor_origin.x(), frame.sensor_origin.y(), frame.sensor_origin.z()}},
      {"ego_pose", to_json(frame.ego_pose)},
      {"ego_velocity_gt", {frame.ego_velocity_gt.x(), frame.ego_velocity_gt.y(), frame.ego_velocity_gt.z()}},
      {"lidar", to_json(frame.lidar)}};
  write_text_atomic(sidecar_path(bin_path), meta.dump(2) + "\n");
}

sim::PointCloudFrame read_frame(const fs::path& bin_path) {
  const std::vector<float> blob = read_f32(bin_path);
  require(blob.size() % 5 == 0, ErrorCode::kParse, "'" + bin_path.string() + "' is not an N x 5 point array");
  sim::PointCloudFrame frame;
  frame.frame_id = bin_path.stem().string();
  frame.points.resize(blob.size() / 5);
  for (std::size_t i = 0; i < frame.points.size(); ++i) {
    const float* r = blob.data() + 5 * i;
    frame.points[i] = {r[0], r[1], r[2], r[3], r[4]};
  }
  const fs::path meta_path = sidecar_path(bin_path);
  if (fs::exists(meta_path)) {
    const json meta = read_json(meta_path);
    try {
      frame.frame_id = meta.value("frame_id", frame.frame_id);
      frame.timestamp = meta.value("timestamp", 0.0);
      if (meta.contains("sensor_origin")) {
        const auto& o = meta.at("sensor_origin");
        frame.sensor_origin = {o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>()};
      }
      if (meta.contains("ego_pose")) frame.ego_pose = pose_from_json(meta.at("ego_pose"));
      if (meta.contains("ego_velocity_gt")) {
        const auto& v = meta.at("ego_velocity_gt");
        frame.ego_velocity_gt = {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()};
      }
      if (meta.contains("lidar")) frame.lidar = lidar_from_json(meta.at("lidar"));
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, "bad frame metadata in '" + meta_path.string() + "': " + e.what());
    }
  }
  return frame;
}

json box_to_json(const DetectionBox& b, BoxRecord kind) {
  json j{{"frame_id", b.frame_ref},
         {"t_query", b.t_query},
         {"t_ref", b.t_ref},
         {"class", class_name(b.cls)},
         {"center", {b.center.x(), b.center.y(), b.center.z()}},
         {"dims", {b.dims.x(), b.dims.y(), b.dims.z()}},
         {"yaw", b.yaw},
         {"velocity", {b.velocity.x(), b.velocity.y()}},
         {"actor_id", b.actor_id}};
  if (b.num_points >= 0) j["num_points"] = b.num_points;
  if (kind == BoxRecord::kDetection) {
    j["score"] = b.score;
    j["time_tag"] = time_tag_name(b.time_tag);
    j["horizon"] = b.horizon;
  }
  return j;
}

DetectionBox box_from_json(const json& j) {
  try {
    DetectionBox b;
    b.frame_ref = j.value("frame_id", std::string{});
    b.t_query = j.value("t_query", 0.0);
    b.t_ref = j.value("t_ref", 0.0);
    b.cls = class_from_name(j.at("class").get<std::string>());
    const auto& c = j.at("center");
    b.center = {c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()};
    const auto& d = j.at("dims");
    b.dims = {d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>()};
    b.yaw = j.at("yaw").get<double>();
    if (j.contains("velocity")) {
      b.velocity = {j["velocity"].at(0).get<double>(), j["velocity"].at(1).get<double>()};
    }
    b.actor_id = j.value("actor_id", -1);
    b.num_points = j.value("num_points", -1);
    b.score = j.value("score", 1.0);
    b.horizon = j.value("horizon", b.t_query - b.t_ref);
    if (j.contains("time_tag")) {
      b.time_tag = time_tag_from_name(j["time_tag"].get<std::string>());
    } else {
      b.time_tag = b.t_query > b.t_ref ? TimeTag::kFuture : TimeTag::kCurrent;
    }
    require((b.dims.array() > 0.0).all(), ErrorCode::kParse, "box dims must be > 0");
    return b;
  } catch (const json::exception& e) {
    fail(ErrorCode::kParse, std::string("malformed box record: ") + e.what());
  }
}

void write_boxes(const fs::path& path, std::span<const DetectionBox> boxes, BoxRecord kind) {
  std::string text;
  for (const auto& b : boxes) {
    text += box_to_json(b, kind).dump();
    text += '\n';
  }
  write_text_atomic(path, text);
}

std::vector<DetectionBox> read_boxes(const fs::path& path) {
  std::istringstream in(read_text(path));
  std::vector<DetectionBox> boxes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorCode::kParse, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    boxes.push_back(box_from_json(j));
  }
  return boxes;
}

}  // namespace pod4d::io
