#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "pod4d/pod4d.h"

namespace {

using ConfigPtr = std::unique_ptr<pod4d_config, decltype(&pod4d_config_free)>;

struct CommonFlags {
  std::string config;
  std::optional<std::string> pipeline;
  std::optional<double> horizon;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
};

class Failure {
 public:
  Failure(int code, std::string name, std::string message)
      : code_(code), name_(std::move(name)), message_(std::move(message)) {}

  int report(const std::string& command) const {
    const nlohmann::json record{
        {"error", {{"command", command}, {"status", code_}, {"name", name_}, {"message", message_}}}};
    std::cerr << record.dump() << std::endl;
    return code_;
  }

 private:
  int code_;
  std::string name_;
  std::string message_;
};

void check(pod4d_status status) {
  if (status != POD4D_OK) throw Failure(status, pod4d_status_name(status), pod4d_last_error());
}

ConfigPtr make_config(const CommonFlags& flags) {
  pod4d_config* raw = nullptr;
  check(flags.config.empty() ? pod4d_config_default(&raw) : pod4d_config_load(flags.config.c_str(), &raw));
  ConfigPtr cfg(raw, pod4d_config_free);
  if (flags.pipeline) check(pod4d_config_set_pipeline(cfg.get(), flags.pipeline->c_str()));
  if (flags.horizon) check(pod4d_config_set_horizon(cfg.get(), *flags.horizon));
  if (flags.seed) check(pod4d_config_set_seed(cfg.get(), *flags.seed));
  if (flags.workers) check(pod4d_config_set_workers(cfg.get(), *flags.workers));
  return cfg;
}

const char* optional_path(const std::string& s) { return s.empty() ? nullptr : s.c_str(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predictive object detection toolkit for FMCW LiDAR"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pod4d_version()));

  CommonFlags flags;
  app.add_option("--config", flags.config, "JSON configuration file")->check(CLI::ExistingFile);
  app.add_option("--pipeline", flags.pipeline, "Encoder: spconv4d or dsvt4d")
      ->check(CLI::IsMember({"spconv4d", "dsvt4d"}));
  app.add_option("--horizon", flags.horizon, "Prediction horizon in seconds");
  app.add_option("--seed", flags.seed, "Random seed");
  app.add_option("--workers", flags.workers, "Worker threads (default: POD4D_WORKERS, then all cores)");

  std::string out, dataset, detections, task = "standard", frame, boxes, gt;
  double render_horizon = 0.0;

  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset");
  simulate->add_option("--out", out, "Dataset directory")->required();

  auto* run = app.add_subcommand("run", "Run the detection pipeline over a dataset");
  run->add_option("--dataset", dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  run->add_option("--out", out, "Output directory")->required();

  auto* evaluate = app.add_subcommand("eval", "Score detections against annotations");
  evaluate->add_option("--detections", detections, "Run output or detection directory")
      ->required()
      ->check(CLI::ExistingDirectory);
  evaluate->add_option("--dataset", dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--task", task, "standard or predictive")->check(CLI::IsMember({"standard", "predictive"}));
  evaluate->add_option("--out", out, "Report directory")->required();

  auto* bench = app.add_subcommand("bench", "Scaling benchmark of both encoder paths");
  bench->add_option("--out", out, "Report directory")->required();

  auto* render = app.add_subcommand("render", "Top-down PPM rendering of a frame");
  render->add_option("--frame", frame, "Frame .bin file")->check(CLI::ExistingFile);
  render->add_option("--boxes", boxes, "Detection JSON lines")->check(CLI::ExistingFile);
  render->add_option("--gt", gt, "Annotation JSON lines")->check(CLI::ExistingFile);
  render->add_option("--gt-horizon", render_horizon, "Also draw ground truth at this horizon");
  render->add_option("--out", out, "Output .ppm file")->required();

  for (CLI::App* sub : {simulate, run, evaluate, bench, render}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return Failure(2, "usage", e.what())
        .report(app.get_subcommands().empty() ? "" : app.get_subcommands()[0]->get_name());
  }

  CLI::App* chosen = app.get_subcommands().front();
  try {
    const ConfigPtr cfg = make_config(flags);
    if (chosen == simulate) {
      check(pod4d_simulate(cfg.get(), out.c_str()));
    } else if (chosen == run) {
      std::size_t failed = 0;
      check(pod4d_run(cfg.get(), dataset.c_str(), out.c_str(), &failed));
      if (failed > 0) std::fprintf(stderr, "%zu frame(s) failed; see run_manifest.json\n", failed);
    } else if (chosen == evaluate) {
      check(pod4d_eval(cfg.get(), detections.c_str(), dataset.c_str(), task.c_str(), out.c_str(), nullptr));
      std::FILE* f = std::fopen((out + "/report.txt").c_str(), "r");
      if (f) {
        char buf[4096];
        std::size_t n = 0;
        while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) std::fwrite(buf, 1, n, stdout);
        std::fclose(f);
      }
    } else if (chosen == bench) {
      check(pod4d_bench(cfg.get(), out.c_str()));
    } else if (chosen == render) {
      check(pod4d_render(cfg.get(), optional_path(frame), optional_path(boxes), optional_path(gt), out.c_str(),
                         render_horizon));
    }
  } catch (const Failure& f) {
    return f.report(chosen->get_name());
  }
  return 0;
}
