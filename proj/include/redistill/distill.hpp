#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "redistill/adapter.hpp"
#include "redistill/estimator.hpp"
#include "redistill/mixture.hpp"
#include "redistill/renderer.hpp"
#include "redistill/retrieval.hpp"
#include "redistill/scene.hpp"

namespace redistill {

struct ParticleSet {
  std::vector<Scene> particles;
  std::uint64_t seed = 0;

  int count() const { return static_cast<int>(particles.size()); }
};

struct AssignmentMap {
  std::vector<std::size_t> assignments;  // particle index -> asset index
};

enum class AssignmentMode { nearest_at_init, random };

struct WarmupConfig {
  int tau = 0;                // warm-up iteration threshold
  double kernel_sigma2 = 0.05;
  int pose_batch = 4;         // psi samples per warm-up step

  void validate() const;
};

struct DistillConfig {
  int particle_count = 3;          // K
  int particle_points = 24;        // points per particle scene
  int iterations = 2000;           // S
  double learning_rate = 2e-3;
  int delta_denoise_period = 3;
  double delta_denoise_weight = 1.0;
  bool use_delta_denoise = true;
  bool use_warmup = true;
  bool use_adapter = true;
  bool use_estimator = true;
  AssignmentMode assignment_mode = AssignmentMode::nearest_at_init;
  WarmupConfig warmup;
  RetrievalConfig retrieval;
  AdaptConfig adapt;
  RenderConfig render;
  NoiseSchedule schedule;
  int estimator_rank = 4;
  double estimator_learning_rate = 1e-2;
  std::uint64_t seed = 0;

  void validate() const;
};

// tau defaults to 15% of the iteration budget unless set explicitly.
int default_warmup_tau(int iterations);

ParticleSet init_particles(const DistillConfig& cfg);

AssignmentMap assign_assets(const ParticleSet& particles,
                            const std::vector<Scene>& assets,
                            const std::vector<CameraPose>& poses,
                            const RenderConfig& cfg,
                            AssignmentMode mode = AssignmentMode::nearest_at_init,
                            std::uint64_t seed = 0);

// Warm-up velocity: indicator(s <= tau) / sigma^2 times the gradient of the
// mean squared render gap to the assigned asset.
SceneGrad v_asset(const Scene& particle, const Scene& assigned_asset,
                  const std::vector<CameraPose>& poses,
                  const WarmupConfig& warmup, int iteration,
                  const RenderConfig& cfg);

// Exact gradient of -log sum_n K(theta - theta_ret^(n)) with a Gaussian
// kernel over flattened parameters. Testing oracle for the one-hot surrogate;
// requires commensurate point counts.
Eigen::VectorXd kernel_velocity_exact(const Scene& particle,
                                      const std::vector<Scene>& all_assets,
                                      double kernel_sigma2);

// Everything the prior side of the velocity needs. Null adapter means the
// unadapted oracle prior; null estimator means SDS mode where the raw noise
// draw stands in for the variational score.
struct PriorContext {
  TargetProvider target;
  const AdapterParams* adapter = nullptr;
  const ViewPrefixTokens* prefixes = nullptr;
  const Eigen::VectorXd* prompt_embedding = nullptr;
  const VariationalEstimator* estimator = nullptr;
};

// v_2D = w(t) * (eps_prior(x_t) - eps_q(x_t)) pulled back through the
// renderer Jacobian at the drawn pose.
SceneGrad v_2d(const Scene& particle, const CameraPose& pose, double t,
               const Eigen::VectorXd& epsilon_draw, const PriorContext& ctx,
               double w_t, const RenderConfig& cfg);

// Delta denoising: v~ = v_2D - weight * v_2D(theta = theta_ret).
SceneGrad delta_denoise_adjust(const SceneGrad& v2d_current,
                               const SceneGrad& v2d_at_asset, double weight);

// v^_3D = v^_2D - v_2D: the adapted-minus-unadapted prior velocity on shared
// draws. Diagnostic only.
SceneGrad asset_velocity_component(const Scene& particle, const CameraPose& pose,
                                   double t, const Eigen::VectorXd& epsilon_draw,
                                   const PriorContext& ctx_with_adapter,
                                   double w_t, const RenderConfig& cfg);

struct RunLogRow {
  int iter = 0;
  int particle = 0;
  double v2d_norm = 0.0;
  double vasset_norm = 0.0;
  double zeta_loss = 0.0;
  int warmup_flag = 0;
  int delta_applied = 0;
};

struct RunLog {
  std::vector<RunLogRow> rows;
  std::string to_csv() const;
};

using TargetBuilder =
    std::function<TargetProvider(const std::vector<AssetRecord>& retrieved)>;

struct DistillOutput {
  ParticleSet particles;
  RunLog log;
  std::vector<AssetRecord> retrieved;
  std::vector<Scene> aligned_assets;
  AssignmentMap assignment;
  AdaptResult adaptation;      // identity when use_adapter is off
  VariationalEstimator estimator;
  // Per-particle centroid of the front render, sampled along the run; feeds
  // the SVG trajectory plots.
  std::vector<std::vector<Eigen::Vector2d>> trajectories;
};

// Intensity-weighted centroid of a render in image-plane coordinates.
Eigen::Vector2d render_centroid(const Eigen::MatrixXd& pixels,
                                const RenderConfig& cfg);

// Full loop: retrieve, align, assign, adapt the prior, then iterate particle
// updates with one zeta DSM step per iteration. Deterministic given the seed.
DistillOutput distill(const DistillConfig& cfg,
                      const std::vector<std::string>& prompt_tokens,
                      const EmbeddingIndex& db, const TargetBuilder& target_builder);

}  // namespace redistill
