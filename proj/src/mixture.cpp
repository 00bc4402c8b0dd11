#include "redistill/mixture.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace redistill {
namespace {

// Per-component log weights and responsibilities at noise level t.
struct PerturbedEval {
  double alpha, sigma;
  std::vector<double> var;       // alpha^2 * cov_k + sigma^2
  std::vector<double> log_term;  // log w_k + log N(x_t; alpha mu_k, var_k I)
  double log_density;
};

PerturbedEval evaluate(const Eigen::VectorXd& x_t, double t,
                       const GaussianMixtureTarget& target) {
  target.validate();
  if (x_t.size() != target.dim())
    throw std::invalid_argument("mixture: x_t dimension mismatch");
  const auto [alpha, sigma] = schedule_coeffs(t);
  const double d = static_cast<double>(x_t.size());
  PerturbedEval ev;
  ev.alpha = alpha;
  ev.sigma = sigma;
  ev.var.reserve(target.components.size());
  ev.log_term.reserve(target.components.size());
  double max_term = -std::numeric_limits<double>::infinity();
  for (const auto& comp : target.components) {
    const double var = alpha * alpha * comp.cov_scale + sigma * sigma;
    const double sq = (x_t - alpha * comp.mean).squaredNorm();
    const double lt = std::log(comp.weight) -
                      0.5 * d * std::log(2.0 * std::numbers::pi * var) -
                      0.5 * sq / var;
    ev.var.push_back(var);
    ev.log_term.push_back(lt);
    max_term = std::max(max_term, lt);
  }
  double sum = 0.0;
  for (double lt : ev.log_term) sum += std::exp(lt - max_term);
  ev.log_density = max_term + std::log(sum);
  return ev;
}

}  // namespace

void GaussianMixtureTarget::validate() const {
  if (components.empty())
    throw std::runtime_error("mixture: empty component list");
  const Eigen::Index d = components.front().mean.size();
  double wsum = 0.0;
  for (const auto& comp : components) {
    if (comp.mean.size() != d)
      throw std::invalid_argument("mixture: inconsistent component dimensions");
    if (!(comp.cov_scale > 0.0))
      throw std::invalid_argument("mixture: cov_scale must be > 0");
    if (!(comp.weight > 0.0))
      throw std::invalid_argument("mixture: weights must be positive");
    wsum += comp.weight;
  }
  if (std::abs(wsum - 1.0) > 1e-12)
    throw std::invalid_argument("mixture: weights must sum to 1");
}

Eigen::Index GaussianMixtureTarget::dim() const {
  return components.empty() ? 0 : components.front().mean.size();
}

double mixture_log_density(const Eigen::VectorXd& x_t, double t,
                           const GaussianMixtureTarget& target) {
  return evaluate(x_t, t, target).log_density;
}

Eigen::VectorXd oracle_score(const Eigen::VectorXd& x_t, double t,
                             const GaussianMixtureTarget& target) {
  const PerturbedEval ev = evaluate(x_t, t, target);
  Eigen::VectorXd score = Eigen::VectorXd::Zero(x_t.size());
  for (std::size_t k = 0; k < target.components.size(); ++k) {
    const double resp = std::exp(ev.log_term[k] - ev.log_density);
    score -= resp / ev.var[k] * (x_t - ev.alpha * target.components[k].mean);
  }
  return score;
}

Eigen::VectorXd oracle_epsilon(const Eigen::VectorXd& x_t, double t,
                               const GaussianMixtureTarget& target) {
  const double sigma = schedule_coeffs(t).sigma;
  return -sigma * oracle_score(x_t, t, target);
}

Eigen::VectorXd ddim_sample(const GaussianMixtureTarget& target, int steps,
                            const Eigen::VectorXd& x_T,
                            const NoiseSchedule& schedule) {
  if (steps < 1) throw std::invalid_argument("ddim_sample: steps must be >= 1");
  schedule.validate();
  target.validate();

  Eigen::VectorXd x = x_T;
  double t_cur = schedule.t_max;
  for (int i = 1; i <= steps; ++i) {
    const double t_next =
        schedule.t_max + (schedule.t_min - schedule.t_max) * i / steps;
    const auto [a_cur, s_cur] = schedule_coeffs(t_cur);
    const auto [a_next, s_next] = schedule_coeffs(t_next);
    const Eigen::VectorXd eps = oracle_epsilon(x, t_cur, target);
    const Eigen::VectorXd x0 = (x - s_cur * eps) / a_cur;
    x = a_next * x0 + s_next * eps;
    t_cur = t_next;
  }
  const auto [a_end, s_end] = schedule_coeffs(t_cur);
  return (x - s_end * oracle_epsilon(x, t_cur, target)) / a_end;
}

GaussianMixtureTarget build_conditional_target(
    const Scene& canonical_scene, const std::vector<CameraBiasEntry>& camera_bias,
    const RenderConfig& renderer_cfg, double component_cov,
    const std::string& condition_id) {
  if (camera_bias.empty())
    throw std::runtime_error("build_conditional_target: empty pose set");
  double wsum = 0.0;
  for (const auto& entry : camera_bias) wsum += entry.weight;
  if (std::abs(wsum - 1.0) > 1e-9)
    throw std::invalid_argument("build_conditional_target: bias weights must sum to 1");

  GaussianMixtureTarget target;
  target.condition_id = condition_id;
  for (const auto& entry : camera_bias) {
    MixtureComponent comp;
    comp.mean = flatten_image(render(canonical_scene, entry.pose, renderer_cfg).pixels);
    comp.cov_scale = component_cov;
    comp.weight = entry.weight;
    target.components.push_back(std::move(comp));
  }
  target.validate();
  return target;
}

TargetProvider constant_target(GaussianMixtureTarget target) {
  auto owned = std::make_shared<GaussianMixtureTarget>(std::move(target));
  return [owned](const CameraPose&) -> const GaussianMixtureTarget& {
    return *owned;
  };
}

std::string target_to_json(const GaussianMixtureTarget& target) {
  nlohmann::json j;
  j["condition_id"] = target.condition_id;
  auto& comps = j["components"] = nlohmann::json::array();
  for (const auto& comp : target.components) {
    nlohmann::json cj;
    cj["mean"] = std::vector<double>(comp.mean.begin(), comp.mean.end());
    cj["cov_scale"] = comp.cov_scale;
    cj["weight"] = comp.weight;
    comps.push_back(std::move(cj));
  }
  return j.dump();
}

GaussianMixtureTarget target_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  GaussianMixtureTarget target;
  target.condition_id = j.value("condition_id", "");
  for (const auto& cj : j.at("components")) {
    MixtureComponent comp;
    const auto mean = cj.at("mean").get<std::vector<double>>();
    comp.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
    comp.cov_scale = cj.at("cov_scale").get<double>();
    comp.weight = cj.at("weight").get<double>();
    target.components.push_back(std::move(comp));
  }
  target.validate();
  return target;
}

}  // namespace redistill
