#pragma once

#include <string>
#include <vector>

#include "redistill/mixture.hpp"
#include "redistill/renderer.hpp"
#include "redistill/scene.hpp"

namespace redistill {

// Mean L2 gap between renders at adjacent azimuths, normalized by the mean
// render norm. Desk-scale analog of A-LPIPS.
double adjacent_view_inconsistency(const Scene& scene,
                                   const std::vector<CameraPose>& pose_grid,
                                   const RenderConfig& cfg);

// Mean over poses of cosine(embed_image(render), embed_text(prompt)).
// Low-signal renders contribute 0 by convention.
double prompt_alignment_score(const Scene& scene,
                              const std::vector<std::string>& prompt_tokens,
                              const std::vector<CameraPose>& pose_grid,
                              const RenderConfig& cfg);

// Mean negative log-density of the renders under the analytic target minus a
// deterministic entropy estimate of the target.
double kl_estimate(const std::vector<Eigen::VectorXd>& particle_renders,
                   const GaussianMixtureTarget& target);

double mixture_entropy_estimate(const GaussianMixtureTarget& target);

}  // namespace redistill
