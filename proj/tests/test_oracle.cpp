#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "redistill/mixture.hpp"
#include "redistill/schedule.hpp"
#include "support/oracles.hpp"

using namespace redistill;

namespace {

GaussianMixtureTarget random_mixture(int dim, int components, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> mean(-2.0, 2.0);
  std::uniform_real_distribution<double> cov(0.05, 1.5);
  std::uniform_real_distribution<double> wgt(0.2, 1.0);
  GaussianMixtureTarget t;
  double wsum = 0.0;
  for (int k = 0; k < components; ++k) {
    MixtureComponent comp;
    comp.mean = Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) { return mean(rng); });
    comp.cov_scale = cov(rng);
    comp.weight = wgt(rng);
    wsum += comp.weight;
    t.components.push_back(std::move(comp));
  }
  for (auto& comp : t.components) comp.weight /= wsum;
  return t;
}

}  // namespace

TEST_CASE("schedule coefficients and weights") {
  CHECK(schedule_coeffs(0.0).alpha == 1.0);
  CHECK(schedule_coeffs(0.0).sigma == 0.0);
  CHECK(schedule_coeffs(1.0).alpha == 0.0);
  CHECK(schedule_coeffs(1.0).sigma == 1.0);

  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const double t = u(rng);
    const auto [a, s] = schedule_coeffs(t);
    CHECK(a * a + s * s == doctest::Approx(1.0).epsilon(1e-14));
  }
  CHECK_THROWS_AS(schedule_coeffs(-0.1), std::domain_error);
  CHECK_THROWS_AS(schedule_coeffs(1.1), std::domain_error);

  NoiseSchedule sched;
  CHECK(schedule_weight(sched, 0.3) == 1.0);
  sched.weight_mode = WeightMode::sigma_squared;
  CHECK(schedule_weight(sched, 0.3) == doctest::Approx(0.3));
}

TEST_CASE("perturb is the affine VP forward map") {
  Eigen::VectorXd x(3);
  x << 1.0, -2.0, 0.5;
  Eigen::VectorXd eps(3);
  eps << 0.1, 0.2, -0.3;
  const double t = 0.37;
  const PerturbedSample s = perturb(x, t, eps);
  const auto [a, sg] = schedule_coeffs(t);
  CHECK((s.x_t - (a * x + sg * eps)).norm() == 0.0);
  CHECK(s.t == t);
  CHECK((s.epsilon - eps).norm() == 0.0);
}

TEST_CASE("mixture log density matches direct evaluation") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::normal_distribution<double> n(0.0, 1.5);
  for (int trial = 0; trial < 25; ++trial) {
    const int dim = 3 + trial % 4;
    const GaussianMixtureTarget target = random_mixture(dim, 1 + trial % 4, 100 + trial);
    const double t = u(rng);
    Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) { return n(rng); });
    const auto [a, s] = schedule_coeffs(t);
    double density = 0.0;
    for (const auto& comp : target.components) {
      const double var = a * a * comp.cov_scale + s * s;
      density += comp.weight *
                 std::exp(-0.5 * (x - a * comp.mean).squaredNorm() / var) /
                 std::pow(2.0 * std::numbers::pi * var, dim / 2.0);
    }
    CHECK(mixture_log_density(x, t, target) ==
          doctest::Approx(std::log(density)).epsilon(1e-10));
  }
}

TEST_CASE("oracle score matches finite differences of the log density") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  std::normal_distribution<double> n(0.0, 1.5);
  int checked = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int dim = 2 + trial % 5;
    const GaussianMixtureTarget target = random_mixture(dim, 1 + trial % 3, trial);
    const double t = u(rng);
    Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) { return n(rng); });
    const Eigen::VectorXd analytic = oracle_score(x, t, target);
    const Eigen::VectorXd numeric = oracles::finite_diff(
        [&](const Eigen::VectorXd& v) { return mixture_log_density(v, t, target); },
        x, 1e-5);
    CHECK(oracles::rel_err(analytic, numeric) < 1e-6);
    ++checked;
  }
  CHECK(checked >= 100);
}

TEST_CASE("oracle epsilon is -sigma times the score") {
  const GaussianMixtureTarget target = random_mixture(4, 3, 42);
  Eigen::VectorXd x(4);
  x << 0.4, -1.0, 2.0, 0.1;
  const double t = 0.55;
  const double sigma = schedule_coeffs(t).sigma;
  CHECK((oracle_epsilon(x, t, target) + sigma * oracle_score(x, t, target)).norm() <
        1e-15);
}

TEST_CASE("DDIM is deterministic and converges near the mean of a tight Gaussian") {
  GaussianMixtureTarget target;
  MixtureComponent comp;
  comp.mean = Eigen::VectorXd::Zero(5);
  comp.mean << 1.0, -0.5, 2.0, 0.25, -1.5;
  comp.cov_scale = 1e-4;
  comp.weight = 1.0;
  target.components.push_back(comp);

  Eigen::VectorXd x_T(5);
  x_T << 0.3, 0.9, -1.1, 0.0, 0.7;
  const Eigen::VectorXd a = ddim_sample(target, 200, x_T);
  const Eigen::VectorXd b = ddim_sample(target, 200, x_T);
  CHECK((a - b).norm() == 0.0);  // bitwise determinism
  CHECK((a - comp.mean).norm() <= 0.05 * comp.mean.norm());
}

TEST_CASE("DDIM halving consistency") {
  const GaussianMixtureTarget target = random_mixture(4, 2, 5);
  std::mt19937 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd x_T = Eigen::VectorXd::NullaryExpr(4, [&](Eigen::Index) { return n(rng); });
  const Eigen::VectorXd coarse = ddim_sample(target, 800, x_T);
  const Eigen::VectorXd fine = ddim_sample(target, 1600, x_T);
  CHECK((coarse - fine).norm() < 1e-3);
}

TEST_CASE("DDIM agrees with an independent probability-flow Euler integrator") {
  NoiseSchedule sched;
  std::mt19937 rng(23);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    const int dim = 3 + trial;
    const GaussianMixtureTarget target = random_mixture(dim, 1 + trial % 3, 300 + trial);
    Eigen::VectorXd x_T =
        Eigen::VectorXd::NullaryExpr(dim, [&](Eigen::Index) { return n(rng); });
    const Eigen::VectorXd ddim = ddim_sample(target, 2000, x_T, sched);
    const Eigen::VectorXd euler = oracles::euler_probability_flow(
        target, 20000, x_T, sched.t_min, sched.t_max);
    CHECK(oracles::rel_err(ddim, euler) < 1e-2);
  }
}

TEST_CASE("geometric-mean KL identity on a discrete toy") {
  // KL(q || g/Z) = mean_v KL(q || p_v) + log Z with g = prod_v p_v^{1/V}.
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const int states = 12, views = 3;
  Eigen::VectorXd q = Eigen::VectorXd::NullaryExpr(states, [&](Eigen::Index) { return u(rng); });
  q /= q.sum();
  std::vector<Eigen::VectorXd> p(views);
  for (auto& pv : p) {
    pv = Eigen::VectorXd::NullaryExpr(states, [&](Eigen::Index) { return u(rng); });
    pv /= pv.sum();
  }
  Eigen::VectorXd g = Eigen::VectorXd::Ones(states);
  for (const auto& pv : p)
    for (int i = 0; i < states; ++i) g(i) *= std::pow(pv(i), 1.0 / views);
  const double z = g.sum();
  const Eigen::VectorXd geo = g / z;

  double mean_kl = 0.0;
  for (const auto& pv : p) mean_kl += oracles::discrete_kl(q, pv);
  mean_kl /= views;
  CHECK(oracles::discrete_kl(q, geo) ==
        doctest::Approx(mean_kl + std::log(z)).epsilon(1e-10));
}

TEST_CASE("build_conditional_target produces one component per bias pose") {
  const Scene s = oracles::random_scene(6, 9);
  RenderConfig rcfg;
  std::vector<CameraBiasEntry> bias = {{make_pose(0.0), 0.7},
                                       {make_pose(std::numbers::pi / 2), 0.2},
                                       {make_pose(std::numbers::pi), 0.1}};
  const GaussianMixtureTarget target =
      build_conditional_target(s, bias, rcfg, 0.05, "cond");
  REQUIRE(target.components.size() == 3);
  CHECK(target.condition_id == "cond");
  for (std::size_t k = 0; k < bias.size(); ++k) {
    CHECK(target.components[k].weight == bias[k].weight);
    CHECK(target.components[k].cov_scale == 0.05);
    const Eigen::VectorXd expect =
        flatten_image(render(s, bias[k].pose, rcfg).pixels);
    CHECK((target.components[k].mean - expect).norm() == 0.0);
  }
  CHECK_THROWS(build_conditional_target(s, {{make_pose(0.0), 0.5}}, rcfg));

  // JSON round trip is exact.
  const GaussianMixtureTarget back = target_from_json(target_to_json(target));
  REQUIRE(back.components.size() == target.components.size());
  for (std::size_t k = 0; k < back.components.size(); ++k) {
    CHECK((back.components[k].mean - target.components[k].mean).norm() == 0.0);
    CHECK(back.components[k].cov_scale == target.components[k].cov_scale);
    CHECK(back.components[k].weight == target.components[k].weight);
  }
}
