#pragma once

#include <Eigen/Dense>

namespace redistill {

enum class WeightMode { constant, sigma_squared };

// Variance-preserving schedule: alpha(t) = sqrt(1 - t), sigma(t) = sqrt(t).
struct NoiseSchedule {
  double t_min = 0.02;
  double t_max = 0.98;
  WeightMode weight_mode = WeightMode::constant;

  void validate() const;  // throws std::invalid_argument
};

struct ScheduleCoeffs {
  double alpha;
  double sigma;
};

// Throws std::domain_error for t outside [0, 1].
ScheduleCoeffs schedule_coeffs(double t);

double schedule_weight(const NoiseSchedule& schedule, double t);

struct PerturbedSample {
  Eigen::VectorXd x_t;
  double t;
  Eigen::VectorXd epsilon;
};

// x_t = alpha(t) * x + sigma(t) * epsilon, with the draw kept alongside.
PerturbedSample perturb(const Eigen::VectorXd& x, double t,
                        const Eigen::VectorXd& epsilon);

}  // namespace redistill
