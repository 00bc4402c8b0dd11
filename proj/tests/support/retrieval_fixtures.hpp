// Shared retrieval fixtures: random databases with synthetic unit embeddings
// and an exhaustive reference implementation of the two-stage pipeline.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdio>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "redistill/embedding.hpp"
#include "redistill/retrieval.hpp"

namespace retrieval_fixtures {

inline Eigen::VectorXd random_unit(std::mt19937& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::VectorXd v = Eigen::VectorXd::NullaryExpr(
      redistill::kEmbeddingDim, [&](Eigen::Index) { return n(rng); });
  return v / v.norm();
}

inline redistill::EmbeddingIndex random_db(int n_records, unsigned seed,
                                           int ties_every = 0) {
  std::mt19937 rng(seed);
  std::vector<redistill::AssetRecord> records;
  Eigen::VectorXd shared_text = random_unit(rng);
  for (int i = 0; i < n_records; ++i) {
    redistill::AssetRecord rec;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "rec-%05d", i);
    rec.uid = buf;
    rec.caption_tokens = {"token"};
    rec.scene.points.push_back({Eigen::Vector3d(0.1, 0.2, 0.3), 1.0});
    rec.text_embedding =
        (ties_every > 0 && i % ties_every == 0) ? shared_text : random_unit(rng);
    for (int v = 0; v < 4; ++v) {
      rec.view_azimuths.push_back(2.0 * std::numbers::pi * v / 4.0);
      rec.view_embeddings.push_back(random_unit(rng));
    }
    records.push_back(std::move(rec));
  }
  return redistill::build_index(std::move(records));
}

inline std::vector<std::string> brute_force(
    const std::vector<std::string>& tokens, const redistill::EmbeddingIndex& index,
    const redistill::RetrievalConfig& cfg) {
  const Eigen::VectorXd q = redistill::embed_text(tokens);
  struct Row {
    double score;
    std::string uid;
    std::size_t idx;
  };
  std::vector<Row> stage1;
  for (std::size_t i = 0; i < index.records.size(); ++i)
    stage1.push_back({q.dot(index.records[i].text_embedding), index.records[i].uid, i});
  std::sort(stage1.begin(), stage1.end(), [](const Row& a, const Row& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.uid < b.uid;
  });
  stage1.resize(std::min<std::size_t>(stage1.size(), cfg.n_prime));

  std::vector<Row> stage2;
  for (const Row& r : stage1) {
    double s = 0.0;
    for (const auto& ve : index.records[r.idx].view_embeddings) s += q.dot(ve);
    s /= static_cast<double>(index.records[r.idx].view_embeddings.size());
    stage2.push_back({s, r.uid, r.idx});
  }
  std::sort(stage2.begin(), stage2.end(), [](const Row& a, const Row& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.uid < b.uid;
  });
  stage2.resize(std::min<std::size_t>(stage2.size(), cfg.n));
  std::vector<std::string> uids;
  for (const Row& r : stage2) uids.push_back(r.uid);
  return uids;
}

}  // namespace retrieval_fixtures
