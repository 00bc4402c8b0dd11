#include "redistill/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

namespace redistill {
namespace {

// Pixel-center coordinate along the image x axis for column c (and, mirrored,
// along z for row r: rows run top-down).
double grid_x(const RenderConfig& cfg, int c) {
  const double step = 2.0 * cfg.extent / cfg.resolution;
  return -cfg.extent + (c + 0.5) * step;
}

double grid_z(const RenderConfig& cfg, int r) {
  const double step = 2.0 * cfg.extent / cfg.resolution;
  return cfg.extent - (r + 0.5) * step;
}

}  // namespace

void RenderConfig::validate() const {
  if (resolution < 4) throw std::invalid_argument("render: resolution must be >= 4");
  if (!(splat_width > 0.0)) throw std::invalid_argument("render: splat_width must be > 0");
  if (!(extent > 0.0)) throw std::invalid_argument("render: extent must be > 0");
}

RenderImage render(const Scene& scene, const CameraPose& pose,
                   const RenderConfig& cfg) {
  scene.validate();
  cfg.validate();
  const int p = cfg.resolution;
  const double inv_2h2 = 1.0 / (2.0 * cfg.splat_width * cfg.splat_width);
  const double ca = std::cos(pose.azimuth);
  const double sa = std::sin(pose.azimuth);

  RenderImage img{Eigen::MatrixXd::Zero(p, p), pose};
  for (const auto& pt : scene.points) {
    const double qx = ca * pt.position.x() - sa * pt.position.y();
    const double qz = pt.position.z();
    for (int r = 0; r < p; ++r) {
      const double dz = grid_z(cfg, r) - qz;
      for (int c = 0; c < p; ++c) {
        const double dx = grid_x(cfg, c) - qx;
        img.pixels(r, c) += pt.weight * std::exp(-(dx * dx + dz * dz) * inv_2h2);
      }
    }
  }
  return img;
}

SceneGrad SceneGrad::zero(std::size_t n_points) {
  SceneGrad g;
  g.positions.assign(n_points, Eigen::Vector3d::Zero());
  g.weights.assign(n_points, 0.0);
  return g;
}

SceneGrad& SceneGrad::operator+=(const SceneGrad& other) {
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] += other.positions[i];
    weights[i] += other.weights[i];
  }
  return *this;
}

SceneGrad& SceneGrad::operator-=(const SceneGrad& other) {
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] -= other.positions[i];
    weights[i] -= other.weights[i];
  }
  return *this;
}

SceneGrad& SceneGrad::operator*=(double s) {
  for (std::size_t i = 0; i < positions.size(); ++i) {
    positions[i] *= s;
    weights[i] *= s;
  }
  return *this;
}

double SceneGrad::norm() const { return flattened().norm(); }

Eigen::VectorXd SceneGrad::flattened() const {
  Eigen::VectorXd v(4 * positions.size());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    v.segment<3>(4 * i) = positions[i];
    v(4 * i + 3) = weights[i];
  }
  return v;
}

SceneGrad operator+(SceneGrad a, const SceneGrad& b) { return a += b; }
SceneGrad operator-(SceneGrad a, const SceneGrad& b) { return a -= b; }
SceneGrad operator*(double s, SceneGrad g) { return g *= s; }

SceneGrad render_vjp(const Scene& scene, const CameraPose& pose,
                     const RenderConfig& cfg, const Eigen::MatrixXd& cotangent) {
  scene.validate();
  cfg.validate();
  const int p = cfg.resolution;
  if (cotangent.rows() != p || cotangent.cols() != p)
    throw std::invalid_argument("render_vjp: cotangent shape mismatch");

  const double h2 = cfg.splat_width * cfg.splat_width;
  const double inv_2h2 = 1.0 / (2.0 * h2);
  const double ca = std::cos(pose.azimuth);
  const double sa = std::sin(pose.azimuth);

  SceneGrad grad = SceneGrad::zero(scene.points.size());
  for (std::size_t m = 0; m < scene.points.size(); ++m) {
    const auto& pt = scene.points[m];
    const double qx = ca * pt.position.x() - sa * pt.position.y();
    const double qz = pt.position.z();
    double acc_qx = 0.0, acc_qz = 0.0, acc_w = 0.0;
    for (int r = 0; r < p; ++r) {
      const double dz = grid_z(cfg, r) - qz;
      for (int c = 0; c < p; ++c) {
        const double dx = grid_x(cfg, c) - qx;
        const double k = std::exp(-(dx * dx + dz * dz) * inv_2h2);
        const double ck = cotangent(r, c) * k;
        // d pixel / d qx = w * k * dx / h^2 (and likewise for qz)
        acc_qx += ck * dx;
        acc_qz += ck * dz;
        acc_w += ck;
      }
    }
    const double gqx = pt.weight * acc_qx / h2;
    const double gqz = pt.weight * acc_qz / h2;
    grad.positions[m] = Eigen::Vector3d(gqx * ca, -gqx * sa, gqz);
    grad.weights[m] = acc_w;
  }
  return grad;
}

ViewL2 view_l2_grad(const Scene& scene_a, const Scene& scene_b,
                    const std::vector<CameraPose>& poses,
                    const RenderConfig& cfg) {
  if (poses.empty()) throw std::invalid_argument("view_l2_grad: empty pose list");
  ViewL2 out;
  out.grad = SceneGrad::zero(scene_a.points.size());
  const double inv_n = 1.0 / static_cast<double>(poses.size());
  for (const auto& pose : poses) {
    const Eigen::MatrixXd ra = render(scene_a, pose, cfg).pixels;
    const Eigen::MatrixXd rb = render(scene_b, pose, cfg).pixels;
    const Eigen::MatrixXd diff = ra - rb;
    out.loss += inv_n * diff.squaredNorm();
    out.grad += render_vjp(scene_a, pose, cfg, 2.0 * inv_n * diff);
  }
  return out;
}

Eigen::VectorXd flatten_image(const Eigen::MatrixXd& pixels) {
  Eigen::VectorXd v(pixels.size());
  int k = 0;
  for (int r = 0; r < pixels.rows(); ++r)
    for (int c = 0; c < pixels.cols(); ++c) v(k++) = pixels(r, c);
  return v;
}

Eigen::MatrixXd unflatten_image(const Eigen::VectorXd& v, int resolution) {
  if (v.size() != static_cast<Eigen::Index>(resolution) * resolution)
    throw std::invalid_argument("unflatten_image: size mismatch");
  Eigen::MatrixXd m(resolution, resolution);
  int k = 0;
  for (int r = 0; r < resolution; ++r)
    for (int c = 0; c < resolution; ++c) m(r, c) = v(k++);
  return m;
}

std::string image_to_csv(const Eigen::MatrixXd& pixels) {
  std::string out;
  char buf[32];
  for (int r = 0; r < pixels.rows(); ++r) {
    for (int c = 0; c < pixels.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", pixels(r, c));
      out += buf;
      out += (c + 1 < pixels.cols()) ? ',' : '\n';
    }
  }
  return out;
}

std::string image_to_pgm(const Eigen::MatrixXd& pixels) {
  const double maxv = std::max(pixels.maxCoeff(), 1e-300);
  std::string out = "P2\n" + std::to_string(pixels.cols()) + " " +
                    std::to_string(pixels.rows()) + "\n255\n";
  for (int r = 0; r < pixels.rows(); ++r) {
    for (int c = 0; c < pixels.cols(); ++c) {
      const int v = static_cast<int>(std::lround(255.0 * pixels(r, c) / maxv));
      out += std::to_string(std::clamp(v, 0, 255));
      out += (c + 1 < pixels.cols()) ? ' ' : '\n';
    }
  }
  return out;
}

std::vector<CameraPose> uniform_pose_grid(int count) {
  if (count < 1) throw std::invalid_argument("uniform_pose_grid: count must be >= 1");
  std::vector<CameraPose> poses;
  poses.reserve(count);
  for (int k = 0; k < count; ++k)
    poses.push_back(make_pose(2.0 * std::numbers::pi * k / count));
  return poses;
}

}  // namespace redistill
