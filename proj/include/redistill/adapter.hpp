#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "redistill/embedding.hpp"
#include "redistill/mixture.hpp"
#include "redistill/renderer.hpp"
#include "redistill/schedule.hpp"

namespace redistill {

inline constexpr int kConditionDim = 2 * kEmbeddingDim;  // prefix (+) prompt

enum class ViewSector { front, side, back };

// Pose-to-prefix sectors with pi/4 boundaries: front around azimuth 0, back
// around pi, side elsewhere.
ViewSector pose_sector(const CameraPose& pose);
std::string sector_name(ViewSector sector);

// Learnable view-prefix tokens e_psi, seeded from the text embeddings of the
// prefix words.
struct ViewPrefixTokens {
  Eigen::VectorXd front, side, back;

  const Eigen::VectorXd& for_sector(ViewSector sector) const;
  Eigen::VectorXd& for_sector(ViewSector sector);
};

ViewPrefixTokens init_prefixes();

// Low-rank adaptation omega of the prior:
//   eps_{omega,phi}(x_t, t, cat(e_psi, c))
//     = eps_phi(x_t, t, c) + g[t_bucket] * (A (B^T x_t) + W cat(e_psi, c))
// Zero A, B, W makes the adapter the identity correction.
struct AdapterParams {
  int rank = 4;
  Eigen::MatrixXd factor_a;  // dim x rank
  Eigen::MatrixXd factor_b;  // dim x rank
  Eigen::MatrixXd cond_proj; // dim x kConditionDim (the W map)
  Eigen::VectorXd t_gains;   // one gain per t bucket
  int t_buckets = 8;

  int t_bucket(double t) const;
  bool is_identity() const;
};

AdapterParams make_adapter(Eigen::Index dim, int rank, std::uint64_t seed);
AdapterParams zero_adapter(Eigen::Index dim, int rank);

Eigen::VectorXd adapted_epsilon(const AdapterParams& adapter,
                                const ViewPrefixTokens& prefixes,
                                const Eigen::VectorXd& x_t, double t,
                                ViewSector pose_prefix,
                                const Eigen::VectorXd& prompt_embedding,
                                const GaussianMixtureTarget& target);

// Deterministic DDIM under the adapted prior: identical to ddim_sample but
// every epsilon evaluation goes through adapted_epsilon with the given
// prefix/prompt condition.
Eigen::VectorXd ddim_sample_adapted(const AdapterParams& adapter,
                                    const ViewPrefixTokens& prefixes,
                                    ViewSector pose_prefix,
                                    const Eigen::VectorXd& prompt_embedding,
                                    const GaussianMixtureTarget& target, int steps,
                                    const Eigen::VectorXd& x_T,
                                    const NoiseSchedule& schedule = {});

// Per-draw DSM loss and its analytic gradients with respect to the adapter
// parameters and the active prefix. One SGD step of adapt() applies these.
struct AdaptGradients {
  double loss = 0.0;
  Eigen::MatrixXd grad_a, grad_b, grad_w;
  double grad_gain = 0.0;       // for the active t bucket
  Eigen::VectorXd grad_prefix;  // for the active sector
  int t_bucket = 0;
};

AdaptGradients adapt_loss_gradients(const AdapterParams& params,
                                    const ViewPrefixTokens& prefixes,
                                    const Eigen::VectorXd& image, double t,
                                    const Eigen::VectorXd& epsilon,
                                    ViewSector sector,
                                    const Eigen::VectorXd& caption_embedding,
                                    const GaussianMixtureTarget& target);

struct AdaptConfig {
  int steps = 2000;
  double learning_rate = 1e-2;
  int early_stop_patience = 50;   // steps without held-out improvement
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;
  int pose_grid = 16;             // uniform render poses per asset
  int rank = 4;
  bool learn_prefixes = true;

  void validate() const;
};

struct AdaptAsset {
  Scene scene;
  Eigen::VectorXd caption_embedding;  // c_ret for this asset
};

struct AdaptResult {
  AdapterParams params;
  ViewPrefixTokens prefixes;
  std::vector<double> train_curve;
  std::vector<double> holdout_curve;
  int stopped_step = 0;
};

// Denoising score matching on uniform-pose renders of the retrieved assets,
// with view-prefix conditions assigned per pose sector. Both the adapter and
// the prefixes receive gradients; training early-stops on held-out DSM loss.
AdaptResult adapt(const std::vector<AdaptAsset>& assets,
                  const TargetProvider& oracle_target, const AdaptConfig& cfg,
                  const RenderConfig& render_cfg,
                  const NoiseSchedule& schedule = {});

// Checkpoint JSON: {rank, A, B, W, t_gains, prefixes, stopped_step}.
std::string adapter_to_json(const AdaptResult& result);
AdaptResult adapter_from_json(const std::string& text);

}  // namespace redistill
