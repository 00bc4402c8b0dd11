#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <vector>

#include "redistill/mixture.hpp"
#include "redistill/schedule.hpp"
#include "redistill/scene.hpp"

namespace redistill {

// Low-rank correction on top of the analytic oracle, standing in for the
// LoRA score estimator of the particle-render distribution:
//   eps_{phi,zeta}(x_t, t, c, psi)
//     = eps_phi(x_t, t, c) + U (V^T x_t) + bias[t_bucket, psi_bucket]
struct VariationalEstimator {
  int rank = 4;
  Eigen::MatrixXd factor_u;  // dim x rank
  Eigen::MatrixXd factor_v;  // dim x rank
  int t_buckets = 8;
  int pose_buckets = 8;
  Eigen::MatrixXd bias;      // dim x (t_buckets * pose_buckets)
  double learning_rate = 1e-2;

  int bucket_index(double t, const CameraPose& pose) const;
};

// Zero U keeps the estimator an exact oracle pass-through at init while the
// small random V lets gradients reach U on the first step.
VariationalEstimator make_estimator(Eigen::Index dim, int rank,
                                    std::uint64_t seed,
                                    double learning_rate = 1e-2);

Eigen::VectorXd variational_epsilon(const VariationalEstimator& estimator,
                                    const Eigen::VectorXd& x_t, double t,
                                    const CameraPose& pose,
                                    const GaussianMixtureTarget& target);

struct PosedRender {
  Eigen::VectorXd image;  // flattened render
  CameraPose pose;
};

// One stochastic denoising-score-matching step on a random (render, t, eps)
// draw. Returns the per-coordinate mean squared epsilon residual.
double dsm_step_zeta(VariationalEstimator& estimator,
                     const std::vector<PosedRender>& particle_renders,
                     const TargetProvider& target, const NoiseSchedule& schedule,
                     std::mt19937_64& rng);

}  // namespace redistill
