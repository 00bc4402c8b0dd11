#include "redistill/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace redistill {

void NoiseSchedule::validate() const {
  if (!(t_min > 0.0 && t_min < 1.0) || !(t_max > 0.0 && t_max < 1.0))
    throw std::invalid_argument("schedule: t_min and t_max must lie in (0, 1)");
  if (!(t_min <= t_max))
    throw std::invalid_argument("schedule: t_min must not exceed t_max");
}

ScheduleCoeffs schedule_coeffs(double t) {
  if (!(t >= 0.0 && t <= 1.0))
    throw std::domain_error("schedule_coeffs: t outside [0, 1]");
  return {std::sqrt(1.0 - t), std::sqrt(t)};
}

double schedule_weight(const NoiseSchedule& schedule, double t) {
  switch (schedule.weight_mode) {
    case WeightMode::sigma_squared:
      return t;  // sigma(t)^2
    case WeightMode::constant:
    default:
      return 1.0;
  }
}

PerturbedSample perturb(const Eigen::VectorXd& x, double t,
                        const Eigen::VectorXd& epsilon) {
  if (x.size() != epsilon.size())
    throw std::invalid_argument("perturb: x and epsilon dimensions differ");
  const auto [alpha, sigma] = schedule_coeffs(t);
  return {alpha * x + sigma * epsilon, t, epsilon};
}

}  // namespace redistill
