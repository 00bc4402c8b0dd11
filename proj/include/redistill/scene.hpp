#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace redistill {

struct ScenePoint {
  Eigen::Vector3d position;
  double weight = 1.0;
};

// A weighted 3D point set; the representation being optimized and retrieved.
struct Scene {
  std::vector<ScenePoint> points;
  std::string id;

  void validate() const;  // throws std::invalid_argument
  std::size_t size() const { return points.size(); }
};

struct CameraPose {
  double azimuth = 0.0;  // radians in [0, 2*pi)
};

double normalize_azimuth(double azimuth);
CameraPose make_pose(double azimuth);

// Rigid rotation about the vertical (z) axis.
// render(rotate_scene(s, d), pose) == render(s, pose with azimuth + d).
Scene rotate_scene(const Scene& scene, double delta_azimuth);

// Flattened parameter vector (x, y, z, w per point), used by the exact
// kernel-velocity oracle.
Eigen::VectorXd scene_parameters(const Scene& scene);

// JSON: {"id": ..., "points": [[x, y, z, w], ...]}
std::string scene_to_json(const Scene& scene);
Scene scene_from_json(const std::string& text);

}  // namespace redistill
