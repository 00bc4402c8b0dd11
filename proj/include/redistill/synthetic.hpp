#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "redistill/renderer.hpp"
#include "redistill/retrieval.hpp"
#include "redistill/scene.hpp"

namespace redistill {

// Category words for the bundled synthetic corpus; also the prompt suite.
const std::vector<std::string>& synthetic_categories();

// Canonical-orientation prototype for a category: a seeded point cluster plus
// a frontal marker along +x so the semantic front is well defined.
Scene category_prototype(const std::string& category, std::uint64_t seed);

// A record variant: the prototype with jittered positions and weights.
Scene jitter_scene(const Scene& scene, double position_noise, std::uint64_t seed);

// Radially symmetric scene (all points on the vertical axis).
Scene make_axis_scene(int n_points, std::uint64_t seed);

struct SyntheticDbConfig {
  int categories = 10;
  int records_per_category = 4;
  int view_grid = 8;
  double jitter = 0.05;
  RenderConfig render;
  std::uint64_t seed = 7;
};

// Builds a full embedding database: per-record text and view embeddings plus
// per-category prefix reference embeddings computed from the prototype.
EmbeddingIndex make_synthetic_db(const SyntheticDbConfig& cfg);

AssetRecord make_asset_record(const std::string& uid,
                              const std::vector<std::string>& caption_tokens,
                              const Scene& scene, const Scene& category_exemplar,
                              int view_grid, const RenderConfig& render_cfg);

}  // namespace redistill
