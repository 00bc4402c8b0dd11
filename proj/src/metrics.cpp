#include "redistill/metrics.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "redistill/embedding.hpp"

namespace redistill {

double adjacent_view_inconsistency(const Scene& scene,
                                   const std::vector<CameraPose>& pose_grid,
                                   const RenderConfig& cfg) {
  if (pose_grid.size() < 2)
    throw std::invalid_argument("adjacent_view_inconsistency: grid must have >= 2 poses");
  std::vector<Eigen::MatrixXd> renders;
  renders.reserve(pose_grid.size());
  double mean_norm = 0.0;
  for (const auto& pose : pose_grid) {
    renders.push_back(render(scene, pose, cfg).pixels);
    mean_norm += renders.back().norm();
  }
  mean_norm /= static_cast<double>(pose_grid.size());
  if (mean_norm < 1e-300) return 0.0;

  double gap = 0.0;
  for (std::size_t k = 0; k < renders.size(); ++k) {
    const std::size_t next = (k + 1) % renders.size();
    gap += (renders[k] - renders[next]).norm();
  }
  gap /= static_cast<double>(renders.size());
  return gap / mean_norm;
}

double prompt_alignment_score(const Scene& scene,
                              const std::vector<std::string>& prompt_tokens,
                              const std::vector<CameraPose>& pose_grid,
                              const RenderConfig& cfg) {
  if (pose_grid.empty())
    throw std::invalid_argument("prompt_alignment_score: empty pose grid");
  const Eigen::VectorXd text = embed_text(prompt_tokens);
  double score = 0.0;
  for (const auto& pose : pose_grid) {
    const ImageEmbedding emb = embed_image(render(scene, pose, cfg).pixels);
    if (!emb.low_signal) score += emb.v.dot(text);
  }
  return score / static_cast<double>(pose_grid.size());
}

double mixture_entropy_estimate(const GaussianMixtureTarget& target) {
  target.validate();
  const double d = static_cast<double>(target.dim());
  double entropy = 0.0;
  for (const auto& comp : target.components) {
    // Component Gaussian entropy plus the weight entropy: a deterministic
    // independence-style estimate, exact for a single component.
    entropy += comp.weight *
               (0.5 * d * std::log(2.0 * std::numbers::pi * std::numbers::e *
                                   comp.cov_scale) -
                std::log(comp.weight));
  }
  return entropy;
}

double kl_estimate(const std::vector<Eigen::VectorXd>& particle_renders,
                   const GaussianMixtureTarget& target) {
  if (particle_renders.empty())
    throw std::invalid_argument("kl_estimate: nonempty renders required");
  double nll = 0.0;
  for (const auto& x : particle_renders) nll -= mixture_log_density(x, 0.0, target);
  nll /= static_cast<double>(particle_renders.size());
  return nll - mixture_entropy_estimate(target);
}

}  // namespace redistill
