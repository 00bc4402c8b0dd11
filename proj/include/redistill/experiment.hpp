#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "redistill/distill.hpp"
#include "redistill/metrics.hpp"
#include "redistill/synthetic.hpp"

namespace redistill {

// Evaluation variants: the full method and the ablations reported by the
// harness. "sds" drops the variational estimator (plain score distillation).
enum class Variant { full, no_adapter, no_retrieval, sds };

Variant variant_from_string(const std::string& name);
std::string variant_name(Variant variant);

// Switches the relevant DistillConfig flags for a variant; other fields are
// left untouched.
void apply_variant(DistillConfig& cfg, Variant variant);

struct ExperimentConfig {
  std::vector<std::vector<std::string>> prompts;
  std::vector<std::uint64_t> seeds = {0};
  Variant variant = Variant::full;
  std::string output_dir = "out";
  std::string db_path;          // empty: build the synthetic corpus
  SyntheticDbConfig synthetic;  // used when db_path is empty
  DistillConfig distill;
  int metric_pose_grid = 24;
  double target_cov = 0.05;
  // Camera bias of the analytic prior, matched to the front-heavy view
  // statistics of 2D generators: weight w_i on azimuth a_i.
  std::vector<CameraBiasEntry> camera_bias = {
      {make_pose(0.0), 0.7}, {make_pose(1.5707963267948966), 0.2},
      {make_pose(3.141592653589793), 0.1}};

  void validate() const;
};

// JSON round trip for the distillation config; every field is optional and
// falls back to the default.
std::string distill_config_to_json(const DistillConfig& cfg);
DistillConfig distill_config_from_json(const std::string& text);

// Reads the experiment JSON. The REDISTILL_SEED environment variable, when
// set, replaces the configured seed list with its single value.
ExperimentConfig experiment_config_from_json(const std::string& text);
ExperimentConfig load_experiment_config(const std::string& path);

// Analytic prior over the top retrieved asset: one mixture component per
// camera-bias pose, centered on the render of the asset under that pose.
TargetBuilder biased_target_builder(const std::vector<CameraBiasEntry>& bias,
                                    const RenderConfig& render_cfg,
                                    double component_cov);

struct MetricsRow {
  std::string prompt;
  std::uint64_t seed = 0;
  int particle = 0;
  std::string variant;
  double adjacent_inconsistency = 0.0;
  double alignment_score = 0.0;
  double kl = 0.0;
  std::string mode_label;  // uid of the nearest aligned asset in render space
};

struct ExperimentReport {
  std::vector<MetricsRow> rows;
  std::string to_csv() const;
};

// uid of the retrieved asset whose renders sit closest to the particle's over
// the pose grid; empty when nothing was retrieved.
std::string nearest_asset_label(const Scene& particle,
                                const std::vector<AssetRecord>& retrieved,
                                const std::vector<Scene>& aligned,
                                const RenderConfig& cfg);

// Hand-rolled SVG emitters for the run artifacts.
std::string svg_trajectory_plot(
    const std::vector<std::vector<Eigen::Vector2d>>& trajectories,
    double extent);
std::string svg_curve_plot(const std::vector<std::vector<double>>& series,
                           const std::string& title);

// Runs every prompt x seed cell, writes per-run artifacts (runlog.csv, scene
// JSON, trajectory and loss SVGs) under output_dir, then report.csv on top.
ExperimentReport run_experiment(const ExperimentConfig& cfg);

}  // namespace redistill
