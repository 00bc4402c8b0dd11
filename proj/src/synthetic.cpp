#include "redistill/synthetic.hpp"

#include <cstdio>
#include <numbers>
#include <random>

#include "redistill/embedding.hpp"
#include "redistill/rng.hpp"

namespace redistill {

const std::vector<std::string>& synthetic_categories() {
  static const std::vector<std::string> cats = {
      "arrow", "chair", "lamp", "tower", "boat",
      "cross", "crane", "plane", "house", "robot"};
  return cats;
}

Scene category_prototype(const std::string& category, std::uint64_t seed) {
  std::mt19937_64 rng = make_stream(seed, "proto-" + category);
  std::uniform_real_distribution<double> body(-0.55, 0.55);
  std::uniform_real_distribution<double> wgt(0.6, 1.0);

  Scene s;
  s.id = category;
  for (int i = 0; i < 10; ++i) {
    s.points.push_back(
        {Eigen::Vector3d(body(rng), body(rng), body(rng)), wgt(rng)});
  }
  // Frontal marker: a heavy nose along +x.
  s.points.push_back({Eigen::Vector3d(0.95, 0.0, 0.0), 1.6});
  s.points.push_back({Eigen::Vector3d(0.78, 0.0, 0.22), 1.1});
  s.points.push_back({Eigen::Vector3d(0.78, 0.0, -0.22), 1.1});
  return s;
}

Scene jitter_scene(const Scene& scene, double position_noise, std::uint64_t seed) {
  std::mt19937_64 rng = make_stream(seed, "jitter");
  std::normal_distribution<double> noise(0.0, position_noise);
  std::uniform_real_distribution<double> wscale(0.9, 1.1);
  Scene out = scene;
  for (auto& p : out.points) {
    p.position += Eigen::Vector3d(noise(rng), noise(rng), noise(rng));
    p.weight *= wscale(rng);
  }
  return out;
}

Scene make_axis_scene(int n_points, std::uint64_t seed) {
  std::mt19937_64 rng = make_stream(seed, "axis");
  std::uniform_real_distribution<double> z(-0.8, 0.8);
  std::uniform_real_distribution<double> wgt(0.5, 1.0);
  Scene s;
  s.id = "axis";
  for (int i = 0; i < n_points; ++i)
    s.points.push_back({Eigen::Vector3d(0.0, 0.0, z(rng)), wgt(rng)});
  return s;
}

AssetRecord make_asset_record(const std::string& uid,
                              const std::vector<std::string>& caption_tokens,
                              const Scene& scene, const Scene& category_exemplar,
                              int view_grid, const RenderConfig& render_cfg) {
  AssetRecord rec;
  rec.uid = uid;
  rec.caption_tokens = caption_tokens;
  rec.scene = scene;
  rec.scene.id = uid;
  rec.text_embedding = embed_text(caption_tokens);
  for (const auto& pose : uniform_pose_grid(view_grid)) {
    rec.view_azimuths.push_back(pose.azimuth);
    rec.view_embeddings.push_back(
        embed_image(render(scene, pose, render_cfg).pixels).v);
  }
  const std::vector<std::pair<std::string, double>> probes = {
      {"front", 0.0},
      {"side", std::numbers::pi / 2.0},
      {"back", std::numbers::pi}};
  for (const auto& [name, az] : probes) {
    rec.prefix_reference_embeddings[name] =
        embed_image(render(category_exemplar, make_pose(az), render_cfg).pixels).v;
  }
  return rec;
}

EmbeddingIndex make_synthetic_db(const SyntheticDbConfig& cfg) {
  std::vector<AssetRecord> records;
  const auto& cats = synthetic_categories();
  for (int c = 0; c < cfg.categories; ++c) {
    const std::string& cat = cats[c % cats.size()];
    const Scene proto = category_prototype(cat, cfg.seed);
    for (int r = 0; r < cfg.records_per_category; ++r) {
      char uid[64];
      std::snprintf(uid, sizeof(uid), "%s-%03d", cat.c_str(), r);
      const Scene variant =
          r == 0 ? proto
                 : jitter_scene(proto, cfg.jitter,
                                derive_seed(cfg.seed, uid));
      records.push_back(make_asset_record(uid, {cat, "object"}, variant, proto,
                                          cfg.view_grid, cfg.render));
    }
  }
  return build_index(std::move(records));
}

}  // namespace redistill
