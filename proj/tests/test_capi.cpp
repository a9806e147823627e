#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "pod4d/pod4d.h"

namespace fs = std::filesystem;

namespace {

struct ConfigDeleter {
  void operator()(pod4d_config* c) const { pod4d_config_free(c); }
};
struct FrameDeleter {
  void operator()(pod4d_frame* f) const { pod4d_frame_free(f); }
};
struct TwoFrameDeleter {
  void operator()(pod4d_two_frame* t) const { pod4d_two_frame_free(t); }
};
using Config = std::unique_ptr<pod4d_config, ConfigDeleter>;

const char* kTiny = R"({
  "seed": 3, "workers": 1,
  "dataset": {"scenes": 1, "frames_per_scene": 2, "horizons": [0.5]},
  "lidar": {"channels": 16},
  "vfe_channels": 8,
  "backbone": {"in_channels": 8, "widths": [8, 8, 8, 8, 8]},
  "dsvt": {"channels": 8, "heads": 2, "ffn_channels": 16}
})";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("pod4d_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Config tiny_config() {
  pod4d_config* raw = nullptr;
  REQUIRE(pod4d_config_default(&raw) == POD4D_OK);
  Config cfg(raw);
  REQUIRE(pod4d_config_merge_json(cfg.get(), kTiny) == POD4D_OK);
  return cfg;
}

std::string config_json(const pod4d_config* cfg) {
  std::size_t needed = 0;
  REQUIRE(pod4d_config_to_json(cfg, nullptr, 0, &needed) == POD4D_OK);
  REQUIRE(needed > 1);
  std::string buf(needed, '\0');
  CHECK(pod4d_config_to_json(cfg, buf.data(), needed - 1, nullptr) == POD4D_ERR_INVALID_ARGUMENT);
  REQUIRE(pod4d_config_to_json(cfg, buf.data(), buf.size(), &needed) == POD4D_OK);
  buf.resize(needed - 1);
  return buf;
}

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::strlen(pod4d_version()) > 0);
  CHECK(std::string(pod4d_status_name(POD4D_OK)) == "ok");
  CHECK(std::string(pod4d_status_name(POD4D_ERR_CONFIG)) == "config");
  CHECK(std::string(pod4d_status_name(static_cast<pod4d_status>(42))) == "unknown");
}

TEST_CASE("config handles report errors without throwing") {
  Config cfg = tiny_config();
  CHECK(pod4d_config_set_pipeline(cfg.get(), "dsvt4d") == POD4D_OK);
  CHECK(pod4d_config_set_pipeline(cfg.get(), "pointnet") != POD4D_OK);
  CHECK(std::strlen(pod4d_last_error()) > 0);
  CHECK(pod4d_config_set_horizon(cfg.get(), 0.2) == POD4D_OK);
  CHECK(std::strlen(pod4d_last_error()) == 0);
  CHECK(pod4d_config_set_horizon(cfg.get(), -0.5) != POD4D_OK);
  CHECK(pod4d_config_set_seed(cfg.get(), 11) == POD4D_OK);
  CHECK(pod4d_config_set_workers(cfg.get(), 1) == POD4D_OK);
  CHECK(pod4d_config_merge_json(cfg.get(), "{\"nonsense\": 1}") == POD4D_ERR_CONFIG);
  CHECK(pod4d_config_merge_json(cfg.get(), "{not json") == POD4D_ERR_PARSE);
  CHECK(pod4d_config_merge_json(nullptr, "{}") == POD4D_ERR_INVALID_ARGUMENT);

  const std::string text = config_json(cfg.get());
  CHECK(text.find("\"dsvt4d\"") != std::string::npos);
  CHECK(text.find("\"horizon\": 0.2") != std::string::npos);

  const fs::path dir = scratch("config");
  {
    std::FILE* f = std::fopen((dir / "c.json").c_str(), "w");
    std::fputs(text.c_str(), f);
    std::fclose(f);
  }
  pod4d_config* loaded = nullptr;
  REQUIRE(pod4d_config_load((dir / "c.json").c_str(), &loaded) == POD4D_OK);
  Config owned(loaded);
  CHECK(config_json(owned.get()) == text);

  pod4d_config* missing = nullptr;
  CHECK(pod4d_config_load((dir / "absent.json").c_str(), &missing) == POD4D_ERR_IO);
  CHECK(missing == nullptr);
  pod4d_config_free(nullptr);
}

TEST_CASE("simulate, run and eval through the C API") {
  const fs::path dir = scratch("e2e");
  Config cfg = tiny_config();
  REQUIRE(pod4d_simulate(cfg.get(), (dir / "data").c_str()) == POD4D_OK);
  std::size_t failed = 99;
  REQUIRE(pod4d_run(cfg.get(), (dir / "data").c_str(), (dir / "run").c_str(), &failed) == POD4D_OK);
  CHECK(failed == 0);
  double map = -2.0;
  REQUIRE(pod4d_eval(cfg.get(), (dir / "run").c_str(), (dir / "data").c_str(), "predictive", (dir / "rep").c_str(),
                     &map) == POD4D_OK);
  CHECK(map >= -1.0);
  CHECK(map <= 1.0);
  CHECK(fs::exists(dir / "rep" / "report.json"));
  CHECK(pod4d_eval(cfg.get(), (dir / "run").c_str(), (dir / "data").c_str(), "sideways", (dir / "rep").c_str(),
                   nullptr) == POD4D_ERR_CONFIG);
  CHECK(pod4d_run(cfg.get(), (dir / "nowhere").c_str(), (dir / "run2").c_str(), nullptr) != POD4D_OK);
  CHECK(pod4d_render(cfg.get(), nullptr, nullptr, nullptr, (dir / "blank.ppm").c_str(), 0.0) == POD4D_OK);
  CHECK(fs::file_size(dir / "blank.ppm") > 0);
}

TEST_CASE("frame access and preprocessing") {
  const fs::path dir = scratch("frame");
  Config cfg = tiny_config();
  REQUIRE(pod4d_simulate(cfg.get(), (dir / "data").c_str()) == POD4D_OK);
  const fs::path bin = dir / "data" / "frames" / "s0000_f0000.bin";

  pod4d_frame* raw = nullptr;
  REQUIRE(pod4d_frame_load(bin.c_str(), &raw) == POD4D_OK);
  std::unique_ptr<pod4d_frame, FrameDeleter> frame(raw);
  const std::size_t n = pod4d_frame_num_points(frame.get());
  REQUIRE(n > 0);
  CHECK(n * 5 * sizeof(float) == fs::file_size(bin));
  std::vector<float> pts(n * 5);
  CHECK(pod4d_frame_points(frame.get(), pts.data(), pts.size() - 1) == POD4D_ERR_INVALID_ARGUMENT);
  REQUIRE(pod4d_frame_points(frame.get(), pts.data(), pts.size()) == POD4D_OK);

  pod4d_two_frame* tf_raw = nullptr;
  REQUIRE(pod4d_preprocess(cfg.get(), frame.get(), &tf_raw) == POD4D_OK);
  std::unique_ptr<pod4d_two_frame, TwoFrameDeleter> tf(tf_raw);
  const std::size_t m = pod4d_two_frame_num_records(tf.get());
  REQUIRE(m > 0);
  CHECK(m <= 2 * n);
  CHECK(m % 2 == 0);
  std::vector<float> rec(m * 7);
  REQUIRE(pod4d_two_frame_records(tf.get(), rec.data(), rec.size()) == POD4D_OK);
  std::size_t now = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const float t = rec[i * 7 + 5];
    CHECK((t == 0.0f || t == 1.0f));
    now += t == 0.0f;
  }
  CHECK(now == m - now);

  pod4d_frame* bad = nullptr;
  CHECK(pod4d_frame_load((dir / "nope.bin").c_str(), &bad) == POD4D_ERR_IO);
  CHECK(pod4d_frame_num_points(nullptr) == 0);
}

TEST_CASE("iou_3d") {
  const double a[7] = {0, 0, 0, 4, 2, 2, 0};
  const double b[7] = {2, 0, 0, 4, 2, 2, 0};
  const double c[7] = {0, 0, 0, 4, 2, 2, M_PI / 2};
  double iou = -1.0;
  REQUIRE(pod4d_iou_3d(a, a, &iou) == POD4D_OK);
  CHECK(iou == doctest::Approx(1.0));
  REQUIRE(pod4d_iou_3d(a, b, &iou) == POD4D_OK);
  CHECK(iou == doctest::Approx(1.0 / 3.0));
  REQUIRE(pod4d_iou_3d(a, c, &iou) == POD4D_OK);
  CHECK(iou == doctest::Approx(4.0 / 12.0));
  CHECK(pod4d_iou_3d(a, nullptr, &iou) == POD4D_ERR_INVALID_ARGUMENT);
  const double far[7] = {10, 0, 0, 4, 2, 2, 0};
  REQUIRE(pod4d_iou_3d(a, far, &iou) == POD4D_OK);
  CHECK(iou == 0.0);
}
