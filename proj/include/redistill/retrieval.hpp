#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "redistill/embedding.hpp"
#include "redistill/renderer.hpp"
#include "redistill/scene.hpp"

namespace redistill {

// A retrievable 3D asset with its caption, text, and per-view embeddings.
struct AssetRecord {
  std::string uid;
  std::vector<std::string> caption_tokens;
  Scene scene;
  Eigen::VectorXd text_embedding;          // unit 64-vector
  std::vector<double> view_azimuths;       // configured pose grid
  std::vector<Eigen::VectorXd> view_embeddings;
  std::map<std::string, Eigen::VectorXd> prefix_reference_embeddings;  // front/side/back
};

enum class IndexMode { exact, coarse_quantized };

struct EmbeddingIndex {
  std::vector<AssetRecord> records;
  IndexMode mode = IndexMode::exact;
};

struct RetrievalConfig {
  int n_prime = 10;  // text-stage pool size N'
  int n = 3;         // final asset count N
  int alignment_grid = 8;
  double symmetry_spread_threshold = 0.02;

  void validate() const;
};

// Validates records and the config against the index.
EmbeddingIndex build_index(std::vector<AssetRecord> records,
                           IndexMode mode = IndexMode::exact);

struct RetrievalResult {
  std::vector<AssetRecord> records;  // ranked, best first
  bool short_result = false;         // fewer than n records available
};

// Two-stage retrieval: rank by text cosine, keep top N', re-rank the pool by
// mean cosine between the query text embedding and the record's view
// embeddings, keep top N. Ties break by ascending uid.
RetrievalResult retrieve(const std::vector<std::string>& query_tokens,
                         const EmbeddingIndex& index, const RetrievalConfig& cfg);

enum class AlignmentStatus { aligned, symmetric_skipped };

struct AlignmentResult {
  Scene aligned;
  double rotation = 0.0;  // one of the candidate grid azimuths
  AlignmentStatus status = AlignmentStatus::aligned;
  double score_spread = 0.0;
};

// Scores every candidate rotation on the grid by the mean cosine between the
// embeddings of the rotated front/side/back renders and the given reference
// prefix embeddings, then picks the argmax. A spread below the threshold
// classifies the asset as radially symmetric and skips the alignment.
AlignmentResult align_orientation(
    const AssetRecord& asset,
    const std::map<std::string, Eigen::VectorXd>& prefix_embeddings,
    const RetrievalConfig& cfg, const RenderConfig& render_cfg);

// JSON-lines DB file: a {"format":"redistill-db","version":1} header line
// followed by one record per line. Loading validates every invariant and
// names the offending uid and field on failure.
void save_db(const EmbeddingIndex& index, const std::string& path);
EmbeddingIndex load_db(const std::string& path);

std::string record_to_json(const AssetRecord& record);
AssetRecord record_from_json(const std::string& line);

}  // namespace redistill
