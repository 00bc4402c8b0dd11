#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "redistill/renderer.hpp"
#include "redistill/schedule.hpp"
#include "redistill/scene.hpp"

namespace redistill {

struct MixtureComponent {
  Eigen::VectorXd mean;      // render-space vector
  double cov_scale = 1.0;    // isotropic covariance scale, > 0
  double weight = 1.0;
};

// The analytic stand-in for the text-conditioned 2D prior p_phi(x | c).
// Perturbing component k to noise level t gives a Gaussian with mean
// alpha * mu_k and covariance (alpha^2 * cov_k + sigma^2) * I.
struct GaussianMixtureTarget {
  std::vector<MixtureComponent> components;
  std::string condition_id;

  void validate() const;  // throws std::invalid_argument / std::runtime_error
  Eigen::Index dim() const;
};

// Log-density of the perturbed mixture at noise level t.
double mixture_log_density(const Eigen::VectorXd& x_t, double t,
                           const GaussianMixtureTarget& target);

// Exact gradient of the perturbed log-density: grad_x log p_phi(x_t | c, t).
Eigen::VectorXd oracle_score(const Eigen::VectorXd& x_t, double t,
                             const GaussianMixtureTarget& target);

// epsilon_phi(x_t | c, t) = -sigma(t) * oracle_score(x_t, t).
Eigen::VectorXd oracle_epsilon(const Eigen::VectorXd& x_t, double t,
                               const GaussianMixtureTarget& target);

// Deterministic DDIM over a uniform t grid from schedule.t_max down to
// schedule.t_min, finishing with a final denoise to the clean estimate.
Eigen::VectorXd ddim_sample(const GaussianMixtureTarget& target, int steps,
                            const Eigen::VectorXd& x_T,
                            const NoiseSchedule& schedule = {});

// One component per pose of the bias distribution, centered at the render of
// the canonical scene under that pose. Reproduces the viewpoint bias of 2D
// prior models in a measurable way.
struct CameraBiasEntry {
  CameraPose pose;
  double weight = 0.0;
};

GaussianMixtureTarget build_conditional_target(
    const Scene& canonical_scene, const std::vector<CameraBiasEntry>& camera_bias,
    const RenderConfig& renderer_cfg, double component_cov = 0.05,
    const std::string& condition_id = "");

// Pose-conditioned view of the 2D prior. Pose-independent targets ignore the
// argument; experiment fixtures may swap the mixture per pose. The returned
// reference must outlive the call site's use.
using TargetProvider =
    std::function<const GaussianMixtureTarget&(const CameraPose&)>;

TargetProvider constant_target(GaussianMixtureTarget target);

// JSON: {"condition_id": ..., "components": [{"mean": [...], "cov_scale": ...,
// "weight": ...}]}
std::string target_to_json(const GaussianMixtureTarget& target);
GaussianMixtureTarget target_from_json(const std::string& text);

}  // namespace redistill
