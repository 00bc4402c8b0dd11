// Independent test oracles: plain-loop reimplementations and numerical
// methods used to check the analytic library code. Deliberately written
// without reusing the library's internals beyond public data types.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "redistill/mixture.hpp"
#include "redistill/renderer.hpp"
#include "redistill/scene.hpp"

namespace oracles {

inline redistill::Scene random_scene(int n_points, unsigned seed,
                                     double extent = 1.0) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> pos(-extent, extent);
  std::uniform_real_distribution<double> wgt(0.3, 1.2);
  redistill::Scene s;
  s.id = "fixture-" + std::to_string(seed);
  for (int i = 0; i < n_points; ++i)
    s.points.push_back({Eigen::Vector3d(pos(rng), pos(rng), pos(rng)), wgt(rng)});
  return s;
}

// Scalar-loop orthographic splat render, written directly from the definition.
inline Eigen::MatrixXd scalar_render(const redistill::Scene& scene,
                                     double azimuth,
                                     const redistill::RenderConfig& cfg) {
  const int p = cfg.resolution;
  Eigen::MatrixXd img = Eigen::MatrixXd::Zero(p, p);
  const double cell = 2.0 * cfg.extent / p;
  const double c_az = std::cos(azimuth), s_az = std::sin(azimuth);
  for (const auto& pt : scene.points) {
    const double qx = c_az * pt.position.x() - s_az * pt.position.y();
    const double qz = pt.position.z();
    for (int r = 0; r < p; ++r) {
      const double v = cfg.extent - (r + 0.5) * cell;
      for (int c = 0; c < p; ++c) {
        const double u = -cfg.extent + (c + 0.5) * cell;
        const double d2 = (u - qx) * (u - qx) + (v - qz) * (v - qz);
        img(r, c) += pt.weight *
                     std::exp(-d2 / (2.0 * cfg.splat_width * cfg.splat_width));
      }
    }
  }
  return img;
}

// Central finite differences over a flattened parameter vector.
inline Eigen::VectorXd finite_diff(
    const std::function<double(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double h = 1e-6) {
  Eigen::VectorXd g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Eigen::VectorXd hi = x, lo = x;
    hi(i) += h;
    lo(i) -= h;
    g(i) = (f(hi) - f(lo)) / (2.0 * h);
  }
  return g;
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double denom = std::max(1e-12, std::max(a.norm(), b.norm()));
  return (a - b).norm() / denom;
}

// Scene parameter plumbing for finite differences: (x, y, z, w) per point.
inline redistill::Scene scene_from_params(const Eigen::VectorXd& theta,
                                          const redistill::Scene& like) {
  redistill::Scene out = like;
  for (std::size_t i = 0; i < out.points.size(); ++i) {
    out.points[i].position = theta.segment<3>(4 * i);
    out.points[i].weight = theta(4 * i + 3);
  }
  return out;
}

// Euler integration of the probability-flow ODE
//   dx/dt = (alpha'/alpha) x + sigma (sigma'/sigma - alpha'/alpha) eps(x, t)
// under the VP schedule alpha = sqrt(1 - t), sigma = sqrt(t). An independent
// deterministic sampler with the same fixed point as DDIM.
inline Eigen::VectorXd euler_probability_flow(
    const redistill::GaussianMixtureTarget& target, int steps,
    const Eigen::VectorXd& x_T, double t_min, double t_max) {
  Eigen::VectorXd x = x_T;
  const double dt = (t_max - t_min) / steps;
  double t = t_max;
  for (int i = 0; i < steps; ++i) {
    const double alpha = std::sqrt(1.0 - t);
    const double sigma = std::sqrt(t);
    const double dalpha = -0.5 / std::sqrt(1.0 - t);
    const double dsigma = 0.5 / std::sqrt(t);
    const Eigen::VectorXd eps = redistill::oracle_epsilon(x, t, target);
    const Eigen::VectorXd dxdt =
        (dalpha / alpha) * x + sigma * (dsigma / sigma - dalpha / alpha) * eps;
    x -= dt * dxdt;  // integrating from t_max down to t_min
    t -= dt;
  }
  // Final denoise to the clean estimate, mirroring the DDIM contract.
  const double alpha = std::sqrt(1.0 - t_min);
  const double sigma = std::sqrt(t_min);
  return (x - sigma * redistill::oracle_epsilon(x, t_min, target)) / alpha;
}

// Discrete distributions for the geometric-mean KL identity.
inline double discrete_kl(const Eigen::VectorXd& q, const Eigen::VectorXd& p) {
  double kl = 0.0;
  for (Eigen::Index i = 0; i < q.size(); ++i)
    if (q(i) > 0.0) kl += q(i) * (std::log(q(i)) - std::log(p(i)));
  return kl;
}

}  // namespace oracles
