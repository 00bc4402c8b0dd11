// redistill command-line front end: retrieve, adapt, distill, eval, demo,
// plus a gen-db helper for building the synthetic corpus on disk.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "redistill/adapter.hpp"
#include "redistill/distill.hpp"
#include "redistill/embedding.hpp"
#include "redistill/experiment.hpp"
#include "redistill/metrics.hpp"
#include "redistill/renderer.hpp"
#include "redistill/retrieval.hpp"
#include "redistill/rng.hpp"
#include "redistill/synthetic.hpp"

namespace {

using namespace redistill;

std::uint64_t effective_seed(std::uint64_t configured) {
  if (const char* env = std::getenv("REDISTILL_SEED"))
    return std::strtoull(env, nullptr, 10);
  return configured;
}

EmbeddingIndex open_db(const std::string& path, std::uint64_t seed) {
  if (!path.empty()) return load_db(path);
  SyntheticDbConfig cfg;
  cfg.seed = seed;
  return make_synthetic_db(cfg);
}

void write_text(const std::string& path, const std::string& body) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << body;
}

DistillConfig read_distill_config(const std::string& path) {
  if (path.empty()) {
    DistillConfig cfg;
    cfg.warmup.tau = default_warmup_tau(cfg.iterations);
    return cfg;
  }
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return distill_config_from_json(text);
}

int cmd_retrieve(const std::string& db_path, const std::vector<std::string>& tokens,
                 int n, bool align, std::uint64_t seed) {
  const EmbeddingIndex db = open_db(db_path, seed);
  RetrievalConfig cfg;
  cfg.n = n;
  const RetrievalResult result = retrieve(tokens, db, cfg);
  if (result.short_result)
    std::cerr << "warning: fewer than " << n << " records available\n";
  RenderConfig rcfg;
  for (const auto& rec : result.records) {
    std::cout << rec.uid;
    if (align) {
      const AlignmentResult a = align_orientation(
          rec, rec.prefix_reference_embeddings, cfg, rcfg);
      std::cout << " rotation=" << a.rotation << " status="
                << (a.status == AlignmentStatus::aligned ? "aligned"
                                                         : "symmetric_skipped")
                << " spread=" << a.score_spread;
    }
    std::cout << "\n";
  }
  return 0;
}

int cmd_adapt(const std::string& db_path, const std::vector<std::string>& tokens,
              const std::string& out_path, int steps, std::uint64_t seed) {
  const EmbeddingIndex db = open_db(db_path, seed);
  RetrievalConfig rcfg;
  RenderConfig render_cfg;
  const RetrievalResult result = retrieve(tokens, db, rcfg);
  if (result.records.empty()) {
    std::cerr << "error: nothing retrieved\n";
    return 1;
  }
  std::vector<AdaptAsset> assets;
  std::vector<CameraBiasEntry> bias = {{make_pose(0.0), 0.7},
                                       {make_pose(1.5707963267948966), 0.2},
                                       {make_pose(3.141592653589793), 0.1}};
  for (const auto& rec : result.records) {
    const Scene aligned =
        align_orientation(rec, rec.prefix_reference_embeddings, rcfg, render_cfg)
            .aligned;
    assets.push_back({aligned, embed_text(rec.caption_tokens)});
  }
  const TargetProvider target = constant_target(build_conditional_target(
      result.records.front().scene, bias, render_cfg, 0.05,
      result.records.front().uid));
  AdaptConfig acfg;
  acfg.steps = steps;
  acfg.seed = seed;
  const AdaptResult adapted = adapt(assets, target, acfg, render_cfg);
  write_text(out_path, adapter_to_json(adapted));
  std::cout << "stopped_step=" << adapted.stopped_step << " checkpoint=" << out_path
            << "\n";
  return 0;
}

int cmd_distill(const std::string& db_path, const std::vector<std::string>& tokens,
                const std::string& config_path, const std::string& out_dir,
                std::uint64_t seed) {
  DistillConfig cfg = read_distill_config(config_path);
  cfg.seed = effective_seed(seed ? seed : cfg.seed);
  const EmbeddingIndex db = open_db(db_path, cfg.seed);
  std::vector<CameraBiasEntry> bias = {{make_pose(0.0), 0.7},
                                       {make_pose(1.5707963267948966), 0.2},
                                       {make_pose(3.141592653589793), 0.1}};
  const TargetBuilder builder = biased_target_builder(bias, cfg.render, 0.05);
  const DistillOutput out = distill(cfg, tokens, db, builder);

  std::filesystem::create_directories(out_dir);
  write_text(out_dir + "/runlog.csv", out.log.to_csv());
  write_text(out_dir + "/trajectory.svg",
             svg_trajectory_plot(out.trajectories, cfg.render.extent));
  for (int k = 0; k < out.particles.count(); ++k) {
    const Scene& particle = out.particles.particles[k];
    write_text(out_dir + "/particle-" + std::to_string(k) + ".json",
               scene_to_json(particle));
    write_text(out_dir + "/particle-" + std::to_string(k) + "-front.pgm",
               image_to_pgm(render(particle, make_pose(0.0), cfg.render).pixels));
    write_text(out_dir + "/particle-" + std::to_string(k) + "-front.csv",
               image_to_csv(render(particle, make_pose(0.0), cfg.render).pixels));
  }
  std::cout << "distilled " << out.particles.count() << " particles -> " << out_dir
            << "\n";
  return 0;
}

int cmd_eval(const std::string& config_path) {
  const ExperimentConfig cfg = load_experiment_config(config_path);
  const ExperimentReport report = run_experiment(cfg);
  std::cout << report.to_csv();
  return 0;
}

int cmd_demo(const std::string& out_dir) {
  // Small deterministic end-to-end run on the in-memory synthetic corpus.
  DistillConfig cfg;
  cfg.particle_count = 2;
  cfg.particle_points = 13;
  cfg.iterations = 40;
  cfg.warmup.tau = default_warmup_tau(cfg.iterations);
  cfg.adapt.steps = 60;
  cfg.seed = effective_seed(11);

  SyntheticDbConfig dbcfg;
  dbcfg.categories = 3;
  dbcfg.records_per_category = 3;
  const EmbeddingIndex db = make_synthetic_db(dbcfg);

  std::vector<CameraBiasEntry> bias = {{make_pose(0.0), 0.7},
                                       {make_pose(1.5707963267948966), 0.2},
                                       {make_pose(3.141592653589793), 0.1}};
  const TargetBuilder builder = biased_target_builder(bias, cfg.render, 0.05);
  const std::vector<std::string> prompt = {"arrow", "object"};
  const DistillOutput out = distill(cfg, prompt, db, builder);

  std::filesystem::create_directories(out_dir);
  write_text(out_dir + "/runlog.csv", out.log.to_csv());
  write_text(out_dir + "/trajectory.svg",
             svg_trajectory_plot(out.trajectories, cfg.render.extent));
  for (int k = 0; k < out.particles.count(); ++k) {
    write_text(out_dir + "/particle-" + std::to_string(k) + ".json",
               scene_to_json(out.particles.particles[k]));
    write_text(
        out_dir + "/particle-" + std::to_string(k) + "-front.pgm",
        image_to_pgm(render(out.particles.particles[k], make_pose(0.0), cfg.render)
                         .pixels));
  }
  const std::vector<CameraPose> grid = uniform_pose_grid(24);
  std::cout << "demo: prompt=arrow seed=" << cfg.seed << "\n";
  for (int k = 0; k < out.particles.count(); ++k) {
    std::printf("particle %d: retrieved=%s inconsistency=%.6f alignment=%.6f\n", k,
                nearest_asset_label(out.particles.particles[k], out.retrieved,
                                    out.aligned_assets, cfg.render)
                    .c_str(),
                adjacent_view_inconsistency(out.particles.particles[k], grid,
                                            cfg.render),
                prompt_alignment_score(out.particles.particles[k], prompt, grid,
                                       cfg.render));
  }
  std::cout << "artifacts -> " << out_dir << "\n";
  return 0;
}

int cmd_gen_db(const std::string& out_path, int categories, int per_category,
               std::uint64_t seed) {
  SyntheticDbConfig cfg;
  cfg.categories = categories;
  cfg.records_per_category = per_category;
  cfg.seed = effective_seed(seed);
  save_db(make_synthetic_db(cfg), out_path);
  std::cout << "wrote " << categories * per_category << " records -> " << out_path
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"redistill: retrieval-augmented score distillation, desk scale"};
  app.require_subcommand(1);

  std::string db_path, config_path, out_dir = "out", out_path = "adapter.json";
  std::vector<std::string> tokens;
  std::uint64_t seed = 0;
  int n = 3, steps = 2000, categories = 10, per_category = 4;
  bool align = false;

  auto* retrieve_cmd = app.add_subcommand("retrieve", "query the asset database");
  retrieve_cmd->add_option("tokens", tokens, "prompt tokens")->required();
  retrieve_cmd->add_option("--db", db_path, "JSON-lines database path");
  retrieve_cmd->add_option("-n", n, "number of assets");
  retrieve_cmd->add_flag("--align", align, "report orientation alignment");
  retrieve_cmd->add_option("--seed", seed, "synthetic-db seed when --db is absent");

  auto* adapt_cmd = app.add_subcommand("adapt", "fit the low-rank prior adapter");
  adapt_cmd->add_option("tokens", tokens, "prompt tokens")->required();
  adapt_cmd->add_option("--db", db_path, "JSON-lines database path");
  adapt_cmd->add_option("-o,--out", out_path, "checkpoint path");
  adapt_cmd->add_option("--steps", steps, "max adaptation steps");
  adapt_cmd->add_option("--seed", seed, "adaptation seed");

  auto* distill_cmd = app.add_subcommand("distill", "run the distillation loop");
  distill_cmd->add_option("tokens", tokens, "prompt tokens")->required();
  distill_cmd->add_option("--db", db_path, "JSON-lines database path");
  distill_cmd->add_option("--config", config_path, "distill config JSON");
  distill_cmd->add_option("-o,--out", out_dir, "output directory");
  distill_cmd->add_option("--seed", seed, "run seed");

  auto* eval_cmd = app.add_subcommand("eval", "run the evaluation harness");
  eval_cmd->add_option("--config", config_path, "experiment config JSON")->required();

  auto* demo_cmd = app.add_subcommand("demo", "small deterministic end-to-end run");
  demo_cmd->add_option("-o,--out", out_dir, "output directory");

  auto* gen_cmd = app.add_subcommand("gen-db", "write the synthetic corpus to disk");
  gen_cmd->add_option("-o,--out", out_path, "database path")->required();
  gen_cmd->add_option("--categories", categories, "category count");
  gen_cmd->add_option("--per-category", per_category, "records per category");
  gen_cmd->add_option("--seed", seed, "corpus seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (retrieve_cmd->parsed())
      return cmd_retrieve(db_path, tokens, n, align, effective_seed(seed));
    if (adapt_cmd->parsed())
      return cmd_adapt(db_path, tokens, out_path, steps, effective_seed(seed));
    if (distill_cmd->parsed())
      return cmd_distill(db_path, tokens, config_path, out_dir, seed);
    if (eval_cmd->parsed()) return cmd_eval(config_path);
    if (demo_cmd->parsed()) return cmd_demo(out_dir);
    if (gen_cmd->parsed())
      return cmd_gen_db(out_path, categories, per_category, seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
