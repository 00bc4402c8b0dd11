#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <numbers>

#include "redistill/embedding.hpp"
#include "redistill/experiment.hpp"
#include "redistill/metrics.hpp"
#include "redistill/synthetic.hpp"
#include "support/oracles.hpp"

using namespace redistill;

TEST_CASE("adjacent view inconsistency vanishes for symmetric scenes") {
  RenderConfig rcfg;
  const Scene axis = make_axis_scene(5, 2);
  const auto grid = uniform_pose_grid(12);
  CHECK(adjacent_view_inconsistency(axis, grid, rcfg) == 0.0);

  const Scene lumpy = oracles::random_scene(6, 3);
  CHECK(adjacent_view_inconsistency(lumpy, grid, rcfg) > 0.0);
  // Deterministic across calls.
  CHECK(adjacent_view_inconsistency(lumpy, grid, rcfg) ==
        adjacent_view_inconsistency(lumpy, grid, rcfg));
  CHECK_THROWS(adjacent_view_inconsistency(lumpy, {make_pose(0.0)}, rcfg));
}

TEST_CASE("prompt alignment score is bounded and zero on empty renders") {
  RenderConfig rcfg;
  const Scene s = oracles::random_scene(6, 5);
  const auto grid = uniform_pose_grid(8);
  const double score = prompt_alignment_score(s, {"arrow", "object"}, grid, rcfg);
  CHECK(score >= -1.0);
  CHECK(score <= 1.0);

  Scene empty;  // all-zero weights render to constant images
  empty.points.push_back({Eigen::Vector3d::Zero(), 0.0});
  CHECK(prompt_alignment_score(empty, {"arrow"}, grid, rcfg) == 0.0);
}

TEST_CASE("alignment score equals the exemplar score for identical renders") {
  RenderConfig rcfg;
  const Scene proto = category_prototype("arrow", 7);
  const auto grid = uniform_pose_grid(8);
  const Eigen::VectorXd text = embed_text({"arrow"});
  double expect = 0.0;
  for (const auto& pose : grid) {
    const ImageEmbedding e = embed_image(render(proto, pose, rcfg).pixels);
    if (!e.low_signal) expect += e.v.dot(text);
  }
  expect /= grid.size();
  CHECK(prompt_alignment_score(proto, {"arrow"}, grid, rcfg) ==
        doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("single-Gaussian kl estimate has the closed form at the mode") {
  const int dim = 9;
  GaussianMixtureTarget target;
  target.components.push_back({Eigen::VectorXd::Constant(dim, 0.7), 0.2, 1.0});

  // NLL at the mean is the closed-form minimum D/2 log(2 pi cov); the entropy
  // estimate is D/2 log(2 pi e cov), so kl = -D/2 exactly.
  const std::vector<Eigen::VectorXd> at_mode = {target.components[0].mean};
  CHECK(kl_estimate(at_mode, target) == doctest::Approx(-dim / 2.0).epsilon(1e-12));

  // Displacement d grows the NLL by d^2 / (2 cov) exactly.
  Eigen::VectorXd shifted = target.components[0].mean;
  shifted(0) += 0.3;
  const double grown = kl_estimate({shifted}, target);
  CHECK(grown - (-dim / 2.0) == doctest::Approx(0.09 / (2.0 * 0.2)).epsilon(1e-12));

  // Approaching the mode decreases the estimate.
  Eigen::VectorXd closer = target.components[0].mean;
  closer(0) += 0.1;
  CHECK(kl_estimate({closer}, target) < grown);
}

TEST_CASE("mixture NLL matches brute-force density evaluation") {
  const int dim = 4;
  GaussianMixtureTarget target;
  target.components.push_back({Eigen::VectorXd::Constant(dim, -0.5), 0.3, 0.4});
  target.components.push_back({Eigen::VectorXd::Constant(dim, 1.0), 0.6, 0.6});

  Eigen::VectorXd x(dim);
  x << 0.2, -0.1, 0.8, 0.0;
  double density = 0.0;
  for (const auto& c : target.components)
    density += c.weight * std::exp(-0.5 * (x - c.mean).squaredNorm() / c.cov_scale) /
               std::pow(2.0 * std::numbers::pi * c.cov_scale, dim / 2.0);
  const double nll = -std::log(density);
  const double got = kl_estimate({x}, target) + mixture_entropy_estimate(target);
  CHECK(std::abs(got - nll) / std::abs(nll) < 1e-10);
}

TEST_CASE("experiment report is deterministic with correct row count") {
  ExperimentConfig cfg;
  cfg.prompts = {{"arrow", "object"}, {"chair", "object"}};
  cfg.seeds = {3, 4};
  cfg.output_dir = "test_metrics_out";
  cfg.distill.particle_count = 2;
  cfg.distill.particle_points = 8;
  cfg.distill.iterations = 6;
  cfg.distill.warmup.tau = 2;
  cfg.distill.adapt.steps = 5;
  cfg.distill.render.resolution = 8;
  cfg.synthetic.categories = 2;
  cfg.synthetic.records_per_category = 2;
  cfg.synthetic.render = cfg.distill.render;
  cfg.metric_pose_grid = 8;

  const ExperimentReport a = run_experiment(cfg);
  const ExperimentReport b = run_experiment(cfg);
  CHECK(a.to_csv() == b.to_csv());
  CHECK(a.rows.size() == 2 * 2 * 2);  // prompts x seeds x particles
  for (const auto& row : a.rows) {
    CHECK(std::isfinite(row.adjacent_inconsistency));
    CHECK(std::isfinite(row.kl));
    CHECK(!row.mode_label.empty());
  }
  std::filesystem::remove_all("test_metrics_out");
}

TEST_CASE("experiment config json parsing and variants") {
  const std::string text = R"({
    "prompts": [["arrow"]],
    "seeds": [7],
    "variant": "no_retrieval",
    "target_cov": 0.1,
    "distill": {"iterations": 50, "render": {"resolution": 8},
                "schedule": {"weight_mode": "sigma_squared"}}
  })";
  const ExperimentConfig cfg = experiment_config_from_json(text);
  CHECK(cfg.variant == Variant::no_retrieval);
  CHECK(cfg.target_cov == 0.1);
  CHECK(cfg.distill.iterations == 50);
  CHECK(cfg.distill.render.resolution == 8);
  CHECK(cfg.distill.schedule.weight_mode == WeightMode::sigma_squared);
  CHECK(cfg.distill.warmup.tau == default_warmup_tau(50));

  DistillConfig d = cfg.distill;
  apply_variant(d, Variant::no_retrieval);
  CHECK_FALSE(d.use_adapter);
  CHECK_FALSE(d.use_warmup);
  CHECK_FALSE(d.use_delta_denoise);
  DistillConfig e = cfg.distill;
  apply_variant(e, Variant::sds);
  CHECK_FALSE(e.use_estimator);

  // Round trip through the config serializer.
  const DistillConfig back = distill_config_from_json(distill_config_to_json(d));
  CHECK(back.iterations == d.iterations);
  CHECK(back.use_adapter == d.use_adapter);
  CHECK(back.schedule.weight_mode == d.schedule.weight_mode);

  CHECK_THROWS(variant_from_string("bogus"));
  CHECK_THROWS(experiment_config_from_json(R"({"prompts": []})"));
}
