#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "redistill/scene.hpp"

namespace redistill {

struct RenderConfig {
  int resolution = 16;       // P, image is P x P
  double splat_width = 0.15; // h, Gaussian splat std-dev in world units
  double extent = 1.5;       // half-width of the image plane

  void validate() const;  // throws std::invalid_argument
};

struct RenderImage {
  Eigen::MatrixXd pixels;  // resolution x resolution, row 0 at the top
  CameraPose pose;
};

// Orthographic Gaussian point splatting. Points are rotated by the camera
// azimuth about the vertical axis, the depth axis is dropped, and each point
// contributes weight * exp(-||grid - projected||^2 / (2 h^2)) to every pixel.
RenderImage render(const Scene& scene, const CameraPose& pose,
                   const RenderConfig& cfg);

// Gradient container over the parameters of one scene.
struct SceneGrad {
  std::vector<Eigen::Vector3d> positions;
  std::vector<double> weights;

  static SceneGrad zero(std::size_t n_points);
  SceneGrad& operator+=(const SceneGrad& other);
  SceneGrad& operator-=(const SceneGrad& other);
  SceneGrad& operator*=(double s);
  double norm() const;
  Eigen::VectorXd flattened() const;  // (x, y, z, w per point)
};

SceneGrad operator+(SceneGrad a, const SceneGrad& b);
SceneGrad operator-(SceneGrad a, const SceneGrad& b);
SceneGrad operator*(double s, SceneGrad g);

// Exact analytic gradient of <render(scene, pose), cotangent> with respect to
// scene positions and weights.
SceneGrad render_vjp(const Scene& scene, const CameraPose& pose,
                     const RenderConfig& cfg, const Eigen::MatrixXd& cotangent);

struct ViewL2 {
  double loss = 0.0;   // E_psi || render(a) - render(b) ||^2 over the pose list
  SceneGrad grad;      // with respect to scene_a
};

ViewL2 view_l2_grad(const Scene& scene_a, const Scene& scene_b,
                    const std::vector<CameraPose>& poses,
                    const RenderConfig& cfg);

// Row-major flattening between images and render-space vectors.
Eigen::VectorXd flatten_image(const Eigen::MatrixXd& pixels);
Eigen::MatrixXd unflatten_image(const Eigen::VectorXd& v, int resolution);

std::string image_to_csv(const Eigen::MatrixXd& pixels);
std::string image_to_pgm(const Eigen::MatrixXd& pixels);

std::vector<CameraPose> uniform_pose_grid(int count);

}  // namespace redistill
