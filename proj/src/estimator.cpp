#include "redistill/estimator.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace redistill {

int VariationalEstimator::bucket_index(double t, const CameraPose& pose) const {
  const int tb = std::min(t_buckets - 1, static_cast<int>(t * t_buckets));
  const int pb = std::min(
      pose_buckets - 1,
      static_cast<int>(pose.azimuth / (2.0 * std::numbers::pi) * pose_buckets));
  return tb * pose_buckets + pb;
}

VariationalEstimator make_estimator(Eigen::Index dim, int rank,
                                    std::uint64_t seed, double learning_rate) {
  if (rank < 1) throw std::invalid_argument("estimator: rank must be >= 1");
  VariationalEstimator est;
  est.rank = rank;
  est.learning_rate = learning_rate;
  est.factor_u = Eigen::MatrixXd::Zero(dim, rank);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.02);
  est.factor_v = Eigen::MatrixXd::NullaryExpr(
      dim, rank, [&](Eigen::Index, Eigen::Index) { return normal(rng); });
  est.bias = Eigen::MatrixXd::Zero(dim, est.t_buckets * est.pose_buckets);
  return est;
}

Eigen::VectorXd variational_epsilon(const VariationalEstimator& estimator,
                                    const Eigen::VectorXd& x_t, double t,
                                    const CameraPose& pose,
                                    const GaussianMixtureTarget& target) {
  if (x_t.size() != estimator.factor_u.rows())
    throw std::invalid_argument("variational_epsilon: dimension mismatch");
  return oracle_epsilon(x_t, t, target) +
         estimator.factor_u * (estimator.factor_v.transpose() * x_t) +
         estimator.bias.col(estimator.bucket_index(t, pose));
}

double dsm_step_zeta(VariationalEstimator& estimator,
                     const std::vector<PosedRender>& particle_renders,
                     const TargetProvider& target, const NoiseSchedule& schedule,
                     std::mt19937_64& rng) {
  if (particle_renders.empty())
    throw std::invalid_argument("dsm_step_zeta: no renders");
  schedule.validate();

  std::uniform_int_distribution<std::size_t> pick(0, particle_renders.size() - 1);
  std::uniform_real_distribution<double> t_draw(schedule.t_min, schedule.t_max);
  std::normal_distribution<double> normal(0.0, 1.0);

  const PosedRender& sample = particle_renders[pick(rng)];
  const double t = t_draw(rng);
  Eigen::VectorXd eps(sample.image.size());
  for (Eigen::Index i = 0; i < eps.size(); ++i) eps(i) = normal(rng);

  const Eigen::VectorXd x_t = perturb(sample.image, t, eps).x_t;
  const Eigen::VectorXd pred =
      variational_epsilon(estimator, x_t, t, sample.pose, target(sample.pose));
  const Eigen::VectorXd residual = pred - eps;
  const double dim = static_cast<double>(residual.size());
  const double loss = residual.squaredNorm() / dim;

  // Analytic gradients of ||pred - eps||^2 / dim.
  const double scale = 2.0 / dim;
  const Eigen::MatrixXd grad_u =
      scale * residual * (estimator.factor_v.transpose() * x_t).transpose();
  const Eigen::MatrixXd grad_v =
      scale * x_t * (estimator.factor_u.transpose() * residual).transpose();
  const Eigen::VectorXd grad_bias = scale * residual;

  const double lr = estimator.learning_rate;
  estimator.factor_u -= lr * grad_u;
  estimator.factor_v -= lr * grad_v;
  estimator.bias.col(estimator.bucket_index(t, sample.pose)) -= lr * grad_bias;
  return loss;
}

}  // namespace redistill
