#include "pod4d/config.hpp"

#include <set>

#include "pod4d/io.hpp"

namespace pod4d {

using nlohmann::json;

const char* pipeline_name(Pipeline p) { return p == Pipeline::kSpconv4d ? "spconv4d" : "dsvt4d"; }

Pipeline pipeline_from_name(const std::string& name) {
  if (name == "spconv4d") return Pipeline::kSpconv4d;
  if (name == "dsvt4d") return Pipeline::kDsvt4d;
  fail(ErrorCode::kConfig, "unknown pipeline '" + name + "' (expected spconv4d or dsvt4d)");
}

namespace {

const char* placement_name(sim::Placement p) { return p == sim::Placement::kLanes ? "lanes" : "free"; }

sim::Placement placement_from_name(const std::string& name) {
  if (name == "lanes") return sim::Placement::kLanes;
  if (name == "free") return sim::Placement::kFree;
  fail(ErrorCode::kConfig, "unknown placement '" + name + "'");
}

const char* velocity_method_name(preprocess::VelocityMethod m) {
  return m == preprocess::VelocityMethod::kGroundMean ? "ground_mean" : "per_ray";
}

preprocess::VelocityMethod velocity_method_from_name(const std::string& name) {
  if (name == "ground_mean") return preprocess::VelocityMethod::kGroundMean;
  if (name == "per_ray") return preprocess::VelocityMethod::kPerRay;
  fail(ErrorCode::kConfig, "unknown velocity_method '" + name + "'");
}

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 vec_from(const json& j) {
  require(j.is_array() && j.size() == 3, ErrorCode::kConfig, "expected a 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <class T>
void read(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

json grid_json(const voxelizer::VoxelGridConfig& g) {
  return {{"voxel_size", g.voxel_size},
          {"grid_shape", g.grid_shape},
          {"origin", g.origin},
          {"channel_mode", voxelizer::channel_mode_name(g.channel_mode)},
          {"count_cap", g.count_cap}};
}

void grid_from(const json& j, voxelizer::VoxelGridConfig& g) {
  read(j, "voxel_size", g.voxel_size);
  read(j, "grid_shape", g.grid_shape);
  read(j, "origin", g.origin);
  read(j, "count_cap", g.count_cap);
  if (j.contains("channel_mode")) g.channel_mode = voxelizer::channel_mode_from_name(j.at("channel_mode"));
}

json scene_json(const sim::SceneConfig& s) {
  json lanes = json::array();
  for (const sim::Lane& l : s.lanes) lanes.push_back({{"y", l.y}, {"direction", l.direction}});
  json classes = json::array();
  for (const sim::ClassSpawn& c : s.classes) {
    classes.push_back({{"class", class_name(c.cls)},
                       {"count", c.count},
                       {"dynamic", c.dynamic},
                       {"dims", vec_json(c.dims_mean)},
                       {"dims_jitter", c.dims_jitter},
                       {"speed_min", c.speed_min},
                       {"speed_max", c.speed_max},
                       {"placement", placement_name(c.placement)}});
  }
  return {
      {"extent",
       {{"x_min", s.extent.x_min}, {"x_max", s.extent.x_max}, {"y_min", s.extent.y_min}, {"y_max", s.extent.y_max}}},
      {"ground_z", s.ground_z},
      {"ego_speed", s.ego_speed},
      {"ego_yaw_rate", s.ego_yaw_rate},
      {"classes", classes},
      {"lanes", lanes},
      {"lane_jitter", s.lane_jitter},
      {"spawn_x_min", s.spawn_x_min},
      {"dynamic_speed_floor", s.dynamic_speed_floor},
      {"max_speed", s.max_speed},
      {"spacing_margin", s.spacing_margin},
      {"max_placement_attempts", s.max_placement_attempts}};
}

void scene_from(const json& j, sim::SceneConfig& s) {
  if (j.contains("extent")) {
    const json& e = j.at("extent");
    read(e, "x_min", s.extent.x_min);
    read(e, "x_max", s.extent.x_max);
    read(e, "y_min", s.extent.y_min);
    read(e, "y_max", s.extent.y_max);
  }
  read(j, "ground_z", s.ground_z);
  read(j, "ego_speed", s.ego_speed);
  read(j, "ego_yaw_rate", s.ego_yaw_rate);
  read(j, "lane_jitter", s.lane_jitter);
  read(j, "spawn_x_min", s.spawn_x_min);
  read(j, "dynamic_speed_floor", s.dynamic_speed_floor);
  read(j, "max_speed", s.max_speed);
  read(j, "spacing_margin", s.spacing_margin);
  read(j, "max_placement_attempts", s.max_placement_attempts);
  if (j.contains("lanes")) {
    s.lanes.clear();
    for (const json& l : j.at("lanes")) s.lanes.push_back({l.at("y").get<double>(), l.value("direction", 1)});
  }
  if (j.contains("classes")) {
    s.classes.clear();
    for (const json& c : j.at("classes")) {
      sim::ClassSpawn spawn;
      spawn.cls = class_from_name(c.at("class").get<std::string>());
      read(c, "count", spawn.count);
      read(c, "dynamic", spawn.dynamic);
      if (c.contains("dims")) spawn.dims_mean = vec_from(c.at("dims"));
      read(c, "dims_jitter", spawn.dims_jitter);
      read(c, "speed_min", spawn.speed_min);
      read(c, "speed_max", spawn.speed_max);
      if (c.contains("placement")) spawn.placement = placement_from_name(c.at("placement"));
      s.classes.push_back(spawn);
    }
  }
}

json ground_json(const preprocess::GroundParams& g) {
  return {{"ground_z_estimate", g.ground_z_estimate},
          {"height_gate", g.height_gate},
          {"inlier_tolerance", g.inlier_tolerance},
          {"max_tilt_deg", g.max_tilt_deg},
          {"min_inliers", g.min_inliers},
          {"iterations", g.iterations},
          {"seed", g.seed}};
}

void ground_from(const json& j, preprocess::GroundParams& g) {
  read(j, "ground_z_estimate", g.ground_z_estimate);
  read(j, "height_gate", g.height_gate);
  read(j, "inlier_tolerance", g.inlier_tolerance);
  read(j, "max_tilt_deg", g.max_tilt_deg);
  read(j, "min_inliers", g.min_inliers);
  read(j, "iterations", g.iterations);
  read(j, "seed", g.seed);
}

json decode_json(const decode::DecodeParams& d) {
  json priors = json::object();
  for (const decode::ClassPrior& p : d.priors) priors[class_name(p.cls)] = vec_json(p.dims);
  return {{"cell_size", d.cell_size},
          {"connect_radius", d.connect_radius},
          {"moving_speed", d.moving_speed},
          {"moving_connect_radius", d.moving_connect_radius},
          {"velocity_gate", d.velocity_gate},
          {"min_points", d.min_points},
          {"score_cap", d.score_cap},
          {"min_extent", d.min_extent},
          {"min_height", d.min_height},
          {"complete_to_prior", d.complete_to_prior},
          {"rigid_future", d.rigid_future},
          {"motion_along_heading", d.motion_along_heading},
          {"min_heading_alignment", d.min_heading_alignment},
          {"priors", priors}};
}

void decode_from(const json& j, decode::DecodeParams& d) {
  read(j, "cell_size", d.cell_size);
  read(j, "connect_radius", d.connect_radius);
  read(j, "moving_speed", d.moving_speed);
  read(j, "moving_connect_radius", d.moving_connect_radius);
  read(j, "velocity_gate", d.velocity_gate);
  read(j, "min_points", d.min_points);
  read(j, "score_cap", d.score_cap);
  read(j, "min_extent", d.min_extent);
  read(j, "min_height", d.min_height);
  read(j, "complete_to_prior", d.complete_to_prior);
  read(j, "rigid_future", d.rigid_future);
  read(j, "motion_along_heading", d.motion_along_heading);
  read(j, "min_heading_alignment", d.min_heading_alignment);
  if (j.contains("priors")) {
    for (const auto& [name, dims] : j.at("priors").items()) {
      const ObjectClass cls = class_from_name(name);
      for (decode::ClassPrior& p : d.priors) {
        if (p.cls == cls) p.dims = vec_from(dims);
      }
    }
  }
}

json eval_json(const eval::EvalConfig& e) {
  json thresholds = json::object();
  for (int c = 0; c < kNumClasses; ++c) {
    thresholds[class_name(static_cast<ObjectClass>(c))] = e.iou_thresholds[static_cast<std::size_t>(c)];
  }
  return {{"iou_thresholds", thresholds},
          {"recall_positions", e.recall_positions},
          {"min_gt_points", e.min_gt_points},
          {"predictive_min_gt_points", e.predictive_min_gt_points}};
}

void eval_from(const json& j, eval::EvalConfig& e) {
  if (j.contains("iou_thresholds")) {
    for (const auto& [name, v] : j.at("iou_thresholds").items()) {
      e.iou_thresholds[static_cast<std::size_t>(class_from_name(name))] = v.get<double>();
    }
  }
  read(j, "recall_positions", e.recall_positions);
  read(j, "min_gt_points", e.min_gt_points);
  read(j, "predictive_min_gt_points", e.predictive_min_gt_points);
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "seed",   "pipeline",        "horizon",     "workers",     "lidar",        "scene",    "dataset",
      "ground", "velocity_method", "spconv_grid", "pillar_grid", "vfe_channels", "backbone", "window",
      "dsvt",   "weights_path",    "decode",      "bev_gating",  "dump_bev",     "eval",     "bench",
      "render"};
  return keys;
}

}  // namespace

void RunConfig::validate() const {
  require(horizon > 0.0, ErrorCode::kConfig, "horizon must be > 0");
  require(workers >= 0, ErrorCode::kConfig, "workers must be >= 0");
  require(dataset.scenes >= 0, ErrorCode::kConfig, "dataset.scenes must be >= 0");
  require(dataset.frames_per_scene >= 1, ErrorCode::kConfig, "dataset.frames_per_scene must be >= 1");
  for (double h : dataset.horizons) require(h > 0.0, ErrorCode::kConfig, "dataset.horizons must be > 0");
  lidar.validate();
  scene.validate();
  spconv_grid.validate();
  pillar_grid.validate();
  require(spconv_grid.grid_shape[3] == 2 && pillar_grid.grid_shape[3] == 2, ErrorCode::kConfig,
          "voxel grids need two temporal slices");
  require(vfe_channels >= 1, ErrorCode::kConfig, "vfe_channels must be >= 1");
  backbone.validate();
  require(backbone.in_channels == vfe_channels, ErrorCode::kConfig, "backbone.in_channels must equal vfe_channels");
  window.validate();
  require(dsvt.channels == vfe_channels, ErrorCode::kConfig, "dsvt.channels must equal vfe_channels");
  require(dsvt.layers >= 1 && dsvt.heads >= 1 && dsvt.channels % dsvt.heads == 0, ErrorCode::kConfig,
          "dsvt.channels must be divisible by dsvt.heads");
  if (!weights_path.empty()) {
    require(std::filesystem::exists(weights_path), ErrorCode::kConfig,
            "weights_path '" + weights_path + "' does not exist");
  }
  decode.validate();
  eval.validate();
  require(bench.repeats >= 1 && bench.density > 0.0 && bench.density <= 1.0, ErrorCode::kConfig,
          "bench.repeats >= 1 and bench.density in (0, 1] required");
  for (int s : bench.sizes) require(s >= 0, ErrorCode::kConfig, "bench.sizes must be >= 0");
  require(bench.attention_heads >= 1 && bench.attention_channels % bench.attention_heads == 0, ErrorCode::kConfig,
          "bench.attention_channels must be divisible by bench.attention_heads");
  require(render.resolution > 0.0 && render.x_max > render.x_min && render.y_max > render.y_min, ErrorCode::kConfig,
          "render window is empty");
}

json RunConfig::to_json() const {
  return {
      {"seed", seed},
      {"pipeline", pipeline_name(pipeline)},
      {"horizon", horizon},
      {"workers", workers},
      {"lidar", io::to_json(lidar)},
      {"scene", scene_json(scene)},
      {"dataset",
       {{"scenes", dataset.scenes}, {"frames_per_scene", dataset.frames_per_scene}, {"horizons", dataset.horizons}}},
      {"ground", ground_json(ground)},
      {"velocity_method", velocity_method_name(velocity_method)},
      {"spconv_grid", grid_json(spconv_grid)},
      {"pillar_grid", grid_json(pillar_grid)},
      {"vfe_channels", vfe_channels},
      {"backbone",
       {{"in_channels", backbone.in_channels},
        {"widths", backbone.widths},
        {"strides", backbone.strides},
        {"submanifold_blocks", backbone.submanifold_blocks},
        {"bn_eps", backbone.bn_eps}}},
      {"window",
       {{"window_shape", window.window_shape},
        {"shifts", window.shifts},
        {"set_capacity", window.set_capacity},
        {"hybrid_factor", window.hybrid_factor}}},
      {"dsvt",
       {{"channels", dsvt.channels},
        {"heads", dsvt.heads},
        {"ffn_channels", dsvt.ffn_channels},
        {"layers", dsvt.layers}}},
      {"weights_path", weights_path},
      {"decode", decode_json(decode)},
      {"bev_gating", bev_gating},
      {"dump_bev", dump_bev},
      {"eval", eval_json(eval)},
      {"bench",
       {{"sizes", bench.sizes},
        {"repeats", bench.repeats},
        {"density", bench.density},
        {"conv_channels", bench.conv_channels},
        {"attention_channels", bench.attention_channels},
        {"attention_heads", bench.attention_heads},
        {"attention_ffn", bench.attention_ffn}}},
      {"render",
       {{"resolution", render.resolution},
        {"x_min", render.x_min},
        {"x_max", render.x_max},
        {"y_min", render.y_min},
        {"y_max", render.y_max}}}};
}

RunConfig config_from_json(const json& j, const RunConfig& base) {
  require(j.is_object(), ErrorCode::kConfig, "configuration must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    require(known_keys().count(key) != 0, ErrorCode::kConfig, "unknown configuration key '" + key + "'");
  }
  RunConfig c = base;
  try {
    read(j, "seed", c.seed);
    if (j.contains("pipeline")) c.pipeline = pipeline_from_name(j.at("pipeline"));
    read(j, "horizon", c.horizon);
    read(j, "workers", c.workers);
    if (j.contains("lidar")) {
      json merged = io::to_json(c.lidar);
      merged.update(j.at("lidar"));
      c.lidar = io::lidar_from_json(merged);
    }
    if (j.contains("scene")) scene_from(j.at("scene"), c.scene);
    if (j.contains("dataset")) {
      const json& d = j.at("dataset");
      read(d, "scenes", c.dataset.scenes);
      read(d, "frames_per_scene", c.dataset.frames_per_scene);
      read(d, "horizons", c.dataset.horizons);
    }
    if (j.contains("ground")) ground_from(j.at("ground"), c.ground);
    if (j.contains("velocity_method")) c.velocity_method = velocity_method_from_name(j.at("velocity_method"));
    if (j.contains("spconv_grid")) grid_from(j.at("spconv_grid"), c.spconv_grid);
    if (j.contains("pillar_grid")) grid_from(j.at("pillar_grid"), c.pillar_grid);
    read(j, "vfe_channels", c.vfe_channels);
    if (j.contains("backbone")) {
      const json& b = j.at("backbone");
      read(b, "in_channels", c.backbone.in_channels);
      read(b, "widths", c.backbone.widths);
      read(b, "strides", c.backbone.strides);
      read(b, "submanifold_blocks", c.backbone.submanifold_blocks);
      read(b, "bn_eps", c.backbone.bn_eps);
    }
    if (j.contains("window")) {
      const json& w = j.at("window");
      read(w, "window_shape", c.window.window_shape);
      read(w, "shifts", c.window.shifts);
      read(w, "set_capacity", c.window.set_capacity);
      read(w, "hybrid_factor", c.window.hybrid_factor);
    }
    if (j.contains("dsvt")) {
      const json& d = j.at("dsvt");
      read(d, "channels", c.dsvt.channels);
      read(d, "heads", c.dsvt.heads);
      read(d, "ffn_channels", c.dsvt.ffn_channels);
      read(d, "layers", c.dsvt.layers);
    }
    read(j, "weights_path", c.weights_path);
    if (j.contains("decode")) decode_from(j.at("decode"), c.decode);
    read(j, "bev_gating", c.bev_gating);
    read(j, "dump_bev", c.dump_bev);
    if (j.contains("eval")) eval_from(j.at("eval"), c.eval);
    if (j.contains("bench")) {
      const json& b = j.at("bench");
      read(b, "sizes", c.bench.sizes);
      read(b, "repeats", c.bench.repeats);
      read(b, "density", c.bench.density);
      read(b, "conv_channels", c.bench.conv_channels);
      read(b, "attention_channels", c.bench.attention_channels);
      read(b, "attention_heads", c.bench.attention_heads);
      read(b, "attention_ffn", c.bench.attention_ffn);
    }
    if (j.contains("render")) {
      const json& r = j.at("render");
      read(r, "resolution", c.render.resolution);
      read(r, "x_min", c.render.x_min);
      read(r, "x_max", c.render.x_max);
      read(r, "y_min", c.render.y_min);
      read(r, "y_max", c.render.y_max);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::kConfig, std::string("malformed configuration: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig c = config_from_json(io::read_json(path));
  if (!c.weights_path.empty() && std::filesystem::path(c.weights_path).is_relative()) {
    c.weights_path = (path.parent_path() / c.weights_path).string();
  }
  c.validate();
  return c;
}

}  // namespace pod4d
