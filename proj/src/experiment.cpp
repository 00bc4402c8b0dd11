#include "redistill/experiment.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>

#include "json.hpp"

#include "redistill/embedding.hpp"
#include "redistill/rng.hpp"

namespace redistill {
namespace {

using nlohmann::json;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("experiment: cannot write " + path.string());
  f << body;
}

}  // namespace

Variant variant_from_string(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "no_adapter") return Variant::no_adapter;
  if (name == "no_retrieval") return Variant::no_retrieval;
  if (name == "sds") return Variant::sds;
  throw std::invalid_argument("unknown variant: " + name);
}

std::string variant_name(Variant variant) {
  switch (variant) {
    case Variant::full: return "full";
    case Variant::no_adapter: return "no_adapter";
    case Variant::no_retrieval: return "no_retrieval";
    case Variant::sds: return "sds";
  }
  throw std::logic_error("variant_name: bad enum");
}

void apply_variant(DistillConfig& cfg, Variant variant) {
  switch (variant) {
    case Variant::full:
      break;
    case Variant::no_adapter:
      cfg.use_adapter = false;
      break;
    case Variant::no_retrieval:
      cfg.use_adapter = false;
      cfg.use_warmup = false;
      cfg.use_delta_denoise = false;
      break;
    case Variant::sds:
      cfg.use_estimator = false;
      break;
  }
}

void ExperimentConfig::validate() const {
  if (prompts.empty())
    throw std::invalid_argument("experiment: at least one prompt required");
  for (const auto& p : prompts)
    if (p.empty()) throw std::invalid_argument("experiment: empty prompt");
  if (seeds.empty())
    throw std::invalid_argument("experiment: at least one seed required");
  if (metric_pose_grid < 2)
    throw std::invalid_argument("experiment: metric_pose_grid must be >= 2");
  if (!(target_cov > 0.0))
    throw std::invalid_argument("experiment: target_cov must be > 0");
  if (camera_bias.empty())
    throw std::invalid_argument("experiment: camera_bias must be nonempty");
  distill.validate();
}

std::string distill_config_to_json(const DistillConfig& cfg) {
  json j;
  j["particle_count"] = cfg.particle_count;
  j["particle_points"] = cfg.particle_points;
  j["iterations"] = cfg.iterations;
  j["learning_rate"] = cfg.learning_rate;
  j["delta_denoise_period"] = cfg.delta_denoise_period;
  j["delta_denoise_weight"] = cfg.delta_denoise_weight;
  j["use_delta_denoise"] = cfg.use_delta_denoise;
  j["use_warmup"] = cfg.use_warmup;
  j["use_adapter"] = cfg.use_adapter;
  j["use_estimator"] = cfg.use_estimator;
  j["assignment_mode"] =
      cfg.assignment_mode == AssignmentMode::random ? "random" : "nearest_at_init";
  j["warmup"] = {{"tau", cfg.warmup.tau},
                 {"kernel_sigma2", cfg.warmup.kernel_sigma2},
                 {"pose_batch", cfg.warmup.pose_batch}};
  j["retrieval"] = {{"n_prime", cfg.retrieval.n_prime},
                    {"n", cfg.retrieval.n},
                    {"alignment_grid", cfg.retrieval.alignment_grid},
                    {"symmetry_spread_threshold",
                     cfg.retrieval.symmetry_spread_threshold}};
  j["adapt"] = {{"steps", cfg.adapt.steps},
                {"learning_rate", cfg.adapt.learning_rate},
                {"early_stop_patience", cfg.adapt.early_stop_patience},
                {"holdout_fraction", cfg.adapt.holdout_fraction},
                {"pose_grid", cfg.adapt.pose_grid},
                {"rank", cfg.adapt.rank},
                {"learn_prefixes", cfg.adapt.learn_prefixes}};
  j["render"] = {{"resolution", cfg.render.resolution},
                 {"splat_width", cfg.render.splat_width},
                 {"extent", cfg.render.extent}};
  j["schedule"] = {{"t_min", cfg.schedule.t_min},
                   {"t_max", cfg.schedule.t_max},
                   {"weight_mode", cfg.schedule.weight_mode == WeightMode::constant
                                       ? "constant"
                                       : "sigma_squared"}};
  j["estimator_rank"] = cfg.estimator_rank;
  j["estimator_learning_rate"] = cfg.estimator_learning_rate;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

static DistillConfig distill_config_from(const json& j) {
  DistillConfig cfg;
  cfg.particle_count = j.value("particle_count", cfg.particle_count);
  cfg.particle_points = j.value("particle_points", cfg.particle_points);
  cfg.iterations = j.value("iterations", cfg.iterations);
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.delta_denoise_period =
      j.value("delta_denoise_period", cfg.delta_denoise_period);
  cfg.delta_denoise_weight =
      j.value("delta_denoise_weight", cfg.delta_denoise_weight);
  cfg.use_delta_denoise = j.value("use_delta_denoise", cfg.use_delta_denoise);
  cfg.use_warmup = j.value("use_warmup", cfg.use_warmup);
  cfg.use_adapter = j.value("use_adapter", cfg.use_adapter);
  cfg.use_estimator = j.value("use_estimator", cfg.use_estimator);
  const std::string mode = j.value("assignment_mode", std::string("nearest_at_init"));
  if (mode == "random")
    cfg.assignment_mode = AssignmentMode::random;
  else if (mode == "nearest_at_init")
    cfg.assignment_mode = AssignmentMode::nearest_at_init;
  else
    throw std::invalid_argument("unknown assignment_mode: " + mode);
  if (j.contains("warmup")) {
    const json& w = j.at("warmup");
    cfg.warmup.tau = w.value("tau", cfg.warmup.tau);
    cfg.warmup.kernel_sigma2 = w.value("kernel_sigma2", cfg.warmup.kernel_sigma2);
    cfg.warmup.pose_batch = w.value("pose_batch", cfg.warmup.pose_batch);
  }
  if (j.contains("retrieval")) {
    const json& r = j.at("retrieval");
    cfg.retrieval.n_prime = r.value("n_prime", cfg.retrieval.n_prime);
    cfg.retrieval.n = r.value("n", cfg.retrieval.n);
    cfg.retrieval.alignment_grid =
        r.value("alignment_grid", cfg.retrieval.alignment_grid);
    cfg.retrieval.symmetry_spread_threshold = r.value(
        "symmetry_spread_threshold", cfg.retrieval.symmetry_spread_threshold);
  }
  if (j.contains("adapt")) {
    const json& a = j.at("adapt");
    cfg.adapt.steps = a.value("steps", cfg.adapt.steps);
    cfg.adapt.learning_rate = a.value("learning_rate", cfg.adapt.learning_rate);
    cfg.adapt.early_stop_patience =
        a.value("early_stop_patience", cfg.adapt.early_stop_patience);
    cfg.adapt.holdout_fraction =
        a.value("holdout_fraction", cfg.adapt.holdout_fraction);
    cfg.adapt.pose_grid = a.value("pose_grid", cfg.adapt.pose_grid);
    cfg.adapt.rank = a.value("rank", cfg.adapt.rank);
    cfg.adapt.learn_prefixes = a.value("learn_prefixes", cfg.adapt.learn_prefixes);
  }
  if (j.contains("render")) {
    const json& r = j.at("render");
    cfg.render.resolution = r.value("resolution", cfg.render.resolution);
    cfg.render.splat_width = r.value("splat_width", cfg.render.splat_width);
    cfg.render.extent = r.value("extent", cfg.render.extent);
  }
  if (j.contains("schedule")) {
    const json& s = j.at("schedule");
    cfg.schedule.t_min = s.value("t_min", cfg.schedule.t_min);
    cfg.schedule.t_max = s.value("t_max", cfg.schedule.t_max);
    const std::string wm = s.value("weight_mode", std::string("constant"));
    if (wm == "constant")
      cfg.schedule.weight_mode = WeightMode::constant;
    else if (wm == "sigma_squared")
      cfg.schedule.weight_mode = WeightMode::sigma_squared;
    else
      throw std::invalid_argument("unknown weight_mode: " + wm);
  }
  cfg.estimator_rank = j.value("estimator_rank", cfg.estimator_rank);
  cfg.estimator_learning_rate =
      j.value("estimator_learning_rate", cfg.estimator_learning_rate);
  cfg.seed = j.value("seed", cfg.seed);
  if (cfg.warmup.tau == 0) cfg.warmup.tau = default_warmup_tau(cfg.iterations);
  return cfg;
}

DistillConfig distill_config_from_json(const std::string& text) {
  return distill_config_from(json::parse(text));
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  ExperimentConfig cfg;
  cfg.prompts.clear();
  for (const auto& p : j.at("prompts"))
    cfg.prompts.push_back(p.get<std::vector<std::string>>());
  if (j.contains("seeds")) cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  cfg.variant = variant_from_string(j.value("variant", std::string("full")));
  cfg.output_dir = j.value("output_dir", cfg.output_dir);
  cfg.db_path = j.value("db_path", cfg.db_path);
  cfg.metric_pose_grid = j.value("metric_pose_grid", cfg.metric_pose_grid);
  cfg.target_cov = j.value("target_cov", cfg.target_cov);
  if (j.contains("camera_bias")) {
    cfg.camera_bias.clear();
    for (const auto& e : j.at("camera_bias"))
      cfg.camera_bias.push_back(
          {make_pose(e.at("azimuth").get<double>()), e.at("weight").get<double>()});
  }
  if (j.contains("distill")) cfg.distill = distill_config_from(j.at("distill"));
  if (j.contains("synthetic")) {
    const json& s = j.at("synthetic");
    cfg.synthetic.categories = s.value("categories", cfg.synthetic.categories);
    cfg.synthetic.records_per_category =
        s.value("records_per_category", cfg.synthetic.records_per_category);
    cfg.synthetic.view_grid = s.value("view_grid", cfg.synthetic.view_grid);
    cfg.synthetic.jitter = s.value("jitter", cfg.synthetic.jitter);
    cfg.synthetic.seed = s.value("seed", cfg.synthetic.seed);
  }
  cfg.synthetic.render = cfg.distill.render;
  if (const char* env = std::getenv("REDISTILL_SEED")) {
    cfg.seeds = {std::strtoull(env, nullptr, 10)};
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("experiment: cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return experiment_config_from_json(text);
}

TargetBuilder biased_target_builder(const std::vector<CameraBiasEntry>& bias,
                                    const RenderConfig& render_cfg,
                                    double component_cov) {
  return [bias, render_cfg, component_cov](
             const std::vector<AssetRecord>& retrieved) -> TargetProvider {
    Scene canonical;
    std::string condition_id = "empty";
    if (!retrieved.empty()) {
      canonical = retrieved.front().scene;
      condition_id = retrieved.front().uid;
    } else {
      // Degenerate fallback so the loop stays well defined on an empty DB.
      canonical.points.push_back({Eigen::Vector3d::Zero(), 1.0});
    }
    return constant_target(build_conditional_target(
        canonical, bias, render_cfg, component_cov, condition_id));
  };
}

std::string nearest_asset_label(const Scene& particle,
                                const std::vector<AssetRecord>& retrieved,
                                const std::vector<Scene>& aligned,
                                const RenderConfig& cfg) {
  if (retrieved.empty()) return "";
  const std::vector<CameraPose> poses = uniform_pose_grid(8);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_idx = 0;
  for (std::size_t a = 0; a < aligned.size(); ++a) {
    double dist = 0.0;
    for (const auto& pose : poses)
      dist += (render(particle, pose, cfg).pixels -
               render(aligned[a], pose, cfg).pixels)
                  .squaredNorm();
    if (dist < best) {
      best = dist;
      best_idx = a;
    }
  }
  return retrieved[best_idx].uid;
}

std::string ExperimentReport::to_csv() const {
  std::string out =
      "prompt,seed,particle,variant,adjacent_inconsistency,alignment_score,"
      "kl_estimate,mode_label\n";
  for (const auto& r : rows) {
    out += r.prompt + "," + std::to_string(r.seed) + "," +
           std::to_string(r.particle) + "," + r.variant + "," +
           fmt_double(r.adjacent_inconsistency) + "," +
           fmt_double(r.alignment_score) + "," + fmt_double(r.kl) + "," +
           r.mode_label + "\n";
  }
  return out;
}

std::string svg_trajectory_plot(
    const std::vector<std::vector<Eigen::Vector2d>>& trajectories,
    double extent) {
  const int size = 480;
  const double scale = size / (2.0 * extent);
  auto px = [&](double u) { return (u + extent) * scale; };
  auto py = [&](double v) { return (extent - v) * scale; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                 "#9467bd", "#ff7f0e", "#8c564b"};
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
      std::to_string(size) + "\" height=\"" + std::to_string(size) + "\">\n" +
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t k = 0; k < trajectories.size(); ++k) {
    const auto& traj = trajectories[k];
    if (traj.empty()) continue;
    std::string pts;
    for (const auto& p : traj)
      pts += fmt_double(px(p.x())) + "," + fmt_double(py(p.y())) + " ";
    const char* color = colors[k % 6];
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
    svg += "<circle cx=\"" + fmt_double(px(traj.back().x())) + "\" cy=\"" +
           fmt_double(py(traj.back().y())) + "\" r=\"4\" fill=\"" + color +
           "\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

std::string svg_curve_plot(const std::vector<std::vector<double>>& series,
                           const std::string& title) {
  const int width = 640, height = 360, margin = 30;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::size_t max_len = 1;
  for (const auto& s : series) {
    max_len = std::max(max_len, s.size());
    for (double v : s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!(lo < hi)) {
    lo = (lo == std::numeric_limits<double>::infinity()) ? 0.0 : lo - 0.5;
    hi = lo + 1.0;
  }
  auto px = [&](std::size_t i, std::size_t n) {
    return margin + (width - 2.0 * margin) * static_cast<double>(i) /
                        static_cast<double>(std::max<std::size_t>(n - 1, 1));
  };
  auto py = [&](double v) {
    return height - margin - (height - 2.0 * margin) * (v - lo) / (hi - lo);
  };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd"};
  std::string svg =
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
      std::to_string(width) + "\" height=\"" + std::to_string(height) + "\">\n" +
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n" +
      "<text x=\"" + std::to_string(margin) + "\" y=\"20\" font-size=\"14\">" +
      title + "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    if (s.empty()) continue;
    std::string pts;
    for (std::size_t i = 0; i < s.size(); ++i)
      pts += fmt_double(px(i, s.size())) + "," + fmt_double(py(s[i])) + " ";
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(colors[k % 4]) +
           "\" stroke-width=\"1\" points=\"" + pts + "\"/>\n";
  }
  svg += "</svg>\n";
  return svg;
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const EmbeddingIndex db =
      cfg.db_path.empty() ? make_synthetic_db(cfg.synthetic) : load_db(cfg.db_path);
  const TargetBuilder builder =
      biased_target_builder(cfg.camera_bias, cfg.distill.render, cfg.target_cov);
  const std::vector<CameraPose> metric_grid = uniform_pose_grid(cfg.metric_pose_grid);
  const std::string vname = variant_name(cfg.variant);

  ExperimentReport report;
  const std::filesystem::path root = cfg.output_dir;
  std::filesystem::create_directories(root);

  for (const auto& prompt : cfg.prompts) {
    for (std::uint64_t seed : cfg.seeds) {
      DistillConfig dcfg = cfg.distill;
      apply_variant(dcfg, cfg.variant);
      dcfg.seed = derive_seed(seed, join_tokens(prompt));

      const DistillOutput out = distill(dcfg, prompt, db, builder);

      const std::filesystem::path run_dir =
          root / vname / (join_tokens(prompt) + "-" + std::to_string(seed));
      std::filesystem::create_directories(run_dir);
      write_file(run_dir / "runlog.csv", out.log.to_csv());
      write_file(run_dir / "trajectory.svg",
                 svg_trajectory_plot(out.trajectories, dcfg.render.extent));
      std::vector<double> zeta_curve;
      for (const auto& row : out.log.rows)
        if (row.particle == 0) zeta_curve.push_back(row.zeta_loss);
      write_file(run_dir / "zeta_loss.svg",
                 svg_curve_plot({zeta_curve}, "zeta DSM loss"));
      if (!out.adaptation.holdout_curve.empty())
        write_file(run_dir / "adapt_curves.svg",
                   svg_curve_plot({out.adaptation.train_curve,
                                   out.adaptation.holdout_curve},
                                  "adapter train/holdout DSM"));

      const TargetProvider metric_provider = builder(out.retrieved);
      const GaussianMixtureTarget& metric_target = metric_provider(make_pose(0.0));
      for (int k = 0; k < out.particles.count(); ++k) {
        const Scene& particle = out.particles.particles[k];
        write_file(run_dir / ("particle-" + std::to_string(k) + ".json"),
                   scene_to_json(particle));
        write_file(run_dir / ("particle-" + std::to_string(k) + "-front.pgm"),
                   image_to_pgm(render(particle, make_pose(0.0), dcfg.render).pixels));

        std::vector<Eigen::VectorXd> renders;
        for (const auto& pose : metric_grid)
          renders.push_back(flatten_image(render(particle, pose, dcfg.render).pixels));

        MetricsRow row;
        row.prompt = join_tokens(prompt);
        row.seed = seed;
        row.particle = k;
        row.variant = vname;
        row.adjacent_inconsistency =
            adjacent_view_inconsistency(particle, metric_grid, dcfg.render);
        row.alignment_score =
            prompt_alignment_score(particle, prompt, metric_grid, dcfg.render);
        row.kl = kl_estimate(renders, metric_target);
        row.mode_label = nearest_asset_label(particle, out.retrieved,
                                             out.aligned_assets, dcfg.render);
        report.rows.push_back(std::move(row));
      }
    }
  }
  write_file(root / "report.csv", report.to_csv());
  return report;
}

}  // namespace redistill
