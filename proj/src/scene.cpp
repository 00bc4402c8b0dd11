#include "redistill/scene.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace redistill {

void Scene::validate() const {
  if (points.empty()) throw std::invalid_argument("scene: needs at least 1 point");
  for (const auto& p : points) {
    if (!p.position.allFinite())
      throw std::invalid_argument("scene: non-finite position");
    if (!(p.weight >= 0.0) || !std::isfinite(p.weight))
      throw std::invalid_argument("scene: negative or non-finite weight");
  }
}

double normalize_azimuth(double azimuth) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double a = std::fmod(azimuth, two_pi);
  if (a < 0.0) a += two_pi;
  if (a >= two_pi) a = 0.0;
  return a;
}

CameraPose make_pose(double azimuth) { return CameraPose{normalize_azimuth(azimuth)}; }

Scene rotate_scene(const Scene& scene, double delta_azimuth) {
  const double c = std::cos(delta_azimuth);
  const double s = std::sin(delta_azimuth);
  Scene out;
  out.id = scene.id;
  out.points.reserve(scene.points.size());
  for (const auto& p : scene.points) {
    Eigen::Vector3d q(c * p.position.x() - s * p.position.y(),
                      s * p.position.x() + c * p.position.y(),
                      p.position.z());
    out.points.push_back({q, p.weight});
  }
  return out;
}

Eigen::VectorXd scene_parameters(const Scene& scene) {
  Eigen::VectorXd v(4 * scene.points.size());
  for (std::size_t i = 0; i < scene.points.size(); ++i) {
    v.segment<3>(4 * i) = scene.points[i].position;
    v(4 * i + 3) = scene.points[i].weight;
  }
  return v;
}

std::string scene_to_json(const Scene& scene) {
  nlohmann::json j;
  j["id"] = scene.id;
  auto& pts = j["points"] = nlohmann::json::array();
  for (const auto& p : scene.points)
    pts.push_back({p.position.x(), p.position.y(), p.position.z(), p.weight});
  return j.dump();
}

Scene scene_from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  Scene s;
  s.id = j.value("id", "");
  for (const auto& row : j.at("points")) {
    if (!row.is_array() || row.size() != 4)
      throw std::invalid_argument("scene: point rows must be [x, y, z, w]");
    s.points.push_back({Eigen::Vector3d(row[0].get<double>(), row[1].get<double>(),
                                        row[2].get<double>()),
                        row[3].get<double>()});
  }
  s.validate();
  return s;
}

}  // namespace redistill
