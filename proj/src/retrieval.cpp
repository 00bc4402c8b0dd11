#include "redistill/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "json.hpp"

namespace redistill {
namespace {

void check_unit(const Eigen::VectorXd& v, const std::string& uid,
                const std::string& field) {
  if (v.size() != kEmbeddingDim)
    throw std::runtime_error("record " + uid + ": " + field + " has wrong dimension");
  if (std::abs(v.norm() - 1.0) > 1e-9)
    throw std::runtime_error("record " + uid + ": " + field + " is not unit-norm");
}

void validate_record(const AssetRecord& rec) {
  if (rec.uid.empty()) throw std::runtime_error("record with empty uid");
  rec.scene.validate();
  check_unit(rec.text_embedding, rec.uid, "text_embedding");
  if (rec.view_azimuths.size() != rec.view_embeddings.size())
    throw std::runtime_error("record " + rec.uid +
                             ": view_azimuths/view_embeddings size mismatch");
  if (rec.view_embeddings.empty())
    throw std::runtime_error("record " + rec.uid + ": no view embeddings");
  for (std::size_t i = 0; i < rec.view_embeddings.size(); ++i)
    check_unit(rec.view_embeddings[i], rec.uid,
               "view_embeddings[" + std::to_string(i) + "]");
  for (const auto& [name, v] : rec.prefix_reference_embeddings)
    check_unit(v, rec.uid, "prefix_reference_embeddings." + name);
}

// Symmetric int8 scalar quantization, the coarse stand-in for a real ANN
// codebook. Scores stay deterministic integers.
std::vector<int> quantize(const Eigen::VectorXd& v) {
  std::vector<int> q(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i)
    q[i] = static_cast<int>(std::lround(std::clamp(v(i), -1.0, 1.0) * 127.0));
  return q;
}

long quantized_dot(const std::vector<int>& a, const std::vector<int>& b) {
  long s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<long>(a[i]) * b[i];
  return s;
}

template <typename Score>
std::vector<std::size_t> rank_by(const std::vector<std::size_t>& candidates,
                                 const EmbeddingIndex& index, Score&& score,
                                 std::size_t keep) {
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (std::size_t i : candidates) scored.emplace_back(score(i), i);
  std::stable_sort(scored.begin(), scored.end(),
                   [&](const auto& a, const auto& b) {
                     if (a.first != b.first) return a.first > b.first;
                     return index.records[a.second].uid < index.records[b.second].uid;
                   });
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < std::min(keep, scored.size()); ++k)
    out.push_back(scored[k].second);
  return out;
}

}  // namespace

void RetrievalConfig::validate() const {
  if (n < 1) throw std::invalid_argument("retrieval: n must be >= 1");
  if (n > n_prime) throw std::invalid_argument("retrieval: n must not exceed n_prime");
  if (alignment_grid < 4)
    throw std::invalid_argument("retrieval: alignment_grid must be >= 4");
}

EmbeddingIndex build_index(std::vector<AssetRecord> records, IndexMode mode) {
  for (const auto& rec : records) validate_record(rec);
  for (std::size_t i = 1; i < records.size(); ++i) {
    if (records[i].view_azimuths != records.front().view_azimuths)
      throw std::runtime_error("record " + records[i].uid +
                               ": view pose grid differs from the index grid");
  }
  return EmbeddingIndex{std::move(records), mode};
}

RetrievalResult retrieve(const std::vector<std::string>& query_tokens,
                         const EmbeddingIndex& index, const RetrievalConfig& cfg) {
  cfg.validate();
  if (index.records.empty())
    throw std::runtime_error("retrieve: empty index");

  const Eigen::VectorXd query = embed_text(query_tokens);
  std::vector<std::size_t> all(index.records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  std::vector<std::size_t> pool, ranked;
  if (index.mode == IndexMode::exact) {
    pool = rank_by(
        all, index,
        [&](std::size_t i) { return query.dot(index.records[i].text_embedding); },
        static_cast<std::size_t>(cfg.n_prime));
    ranked = rank_by(
        pool, index,
        [&](std::size_t i) {
          double s = 0.0;
          for (const auto& ve : index.records[i].view_embeddings) s += query.dot(ve);
          return s / static_cast<double>(index.records[i].view_embeddings.size());
        },
        static_cast<std::size_t>(cfg.n));
  } else {
    const std::vector<int> qq = quantize(query);
    pool = rank_by(
        all, index,
        [&](std::size_t i) {
          return static_cast<double>(
              quantized_dot(qq, quantize(index.records[i].text_embedding)));
        },
        static_cast<std::size_t>(cfg.n_prime));
    ranked = rank_by(
        pool, index,
        [&](std::size_t i) {
          double s = 0.0;
          for (const auto& ve : index.records[i].view_embeddings)
            s += static_cast<double>(quantized_dot(qq, quantize(ve)));
          return s / static_cast<double>(index.records[i].view_embeddings.size());
        },
        static_cast<std::size_t>(cfg.n));
  }

  RetrievalResult result;
  result.short_result = ranked.size() < static_cast<std::size_t>(cfg.n);
  for (std::size_t i : ranked) result.records.push_back(index.records[i]);
  return result;
}

AlignmentResult align_orientation(
    const AssetRecord& asset,
    const std::map<std::string, Eigen::VectorXd>& prefix_embeddings,
    const RetrievalConfig& cfg, const RenderConfig& render_cfg) {
  cfg.validate();
  const std::vector<std::pair<std::string, double>> probe_views = {
      {"front", 0.0},
      {"side", std::numbers::pi / 2.0},
      {"back", std::numbers::pi}};
  for (const auto& [name, az] : probe_views) {
    (void)az;
    if (!prefix_embeddings.count(name))
      throw std::invalid_argument("align_orientation: missing prefix embedding " + name);
  }

  double best_score = -2.0, worst_score = 2.0;
  double best_rotation = 0.0;
  for (int k = 0; k < cfg.alignment_grid; ++k) {
    const double rot = 2.0 * std::numbers::pi * k / cfg.alignment_grid;
    const Scene rotated = rotate_scene(asset.scene, rot);
    double score = 0.0;
    for (const auto& [name, az] : probe_views) {
      const auto emb = embed_image(render(rotated, make_pose(az), render_cfg).pixels);
      score += emb.v.dot(prefix_embeddings.at(name));
    }
    score /= static_cast<double>(probe_views.size());
    if (score > best_score) {
      best_score = score;
      best_rotation = rot;
    }
    worst_score = std::min(worst_score, score);
  }

  AlignmentResult result;
  result.score_spread = best_score - worst_score;
  if (result.score_spread < cfg.symmetry_spread_threshold) {
    result.status = AlignmentStatus::symmetric_skipped;
    result.rotation = 0.0;
    result.aligned = asset.scene;
  } else {
    result.status = AlignmentStatus::aligned;
    result.rotation = best_rotation;
    result.aligned = rotate_scene(asset.scene, best_rotation);
  }
  return result;
}

std::string record_to_json(const AssetRecord& record) {
  nlohmann::json j;
  j["uid"] = record.uid;
  j["caption_tokens"] = record.caption_tokens;
  j["scene"] = nlohmann::json::parse(scene_to_json(record.scene));
  j["text_embedding"] =
      std::vector<double>(record.text_embedding.begin(), record.text_embedding.end());
  auto& views = j["view_embeddings"] = nlohmann::json::array();
  for (std::size_t i = 0; i < record.view_embeddings.size(); ++i) {
    views.push_back({{"azimuth", record.view_azimuths[i]},
                     {"v", std::vector<double>(record.view_embeddings[i].begin(),
                                               record.view_embeddings[i].end())}});
  }
  auto& prefixes = j["prefix_reference_embeddings"] = nlohmann::json::object();
  for (const auto& [name, v] : record.prefix_reference_embeddings)
    prefixes[name] = std::vector<double>(v.begin(), v.end());
  return j.dump();
}

AssetRecord record_from_json(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line);
  AssetRecord rec;
  rec.uid = j.at("uid").get<std::string>();
  rec.caption_tokens = j.at("caption_tokens").get<std::vector<std::string>>();
  rec.scene = scene_from_json(j.at("scene").dump());
  auto to_vec = [](const nlohmann::json& arr) {
    const auto vals = arr.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(vals.data(), vals.size()).eval();
  };
  rec.text_embedding = to_vec(j.at("text_embedding"));
  for (const auto& vj : j.at("view_embeddings")) {
    rec.view_azimuths.push_back(vj.at("azimuth").get<double>());
    rec.view_embeddings.push_back(to_vec(vj.at("v")));
  }
  for (const auto& [name, arr] : j.at("prefix_reference_embeddings").items())
    rec.prefix_reference_embeddings[name] = to_vec(arr);
  validate_record(rec);
  return rec;
}

void save_db(const EmbeddingIndex& index, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_db: cannot open " + path);
  out << R"({"format":"redistill-db","version":1})" << "\n";
  for (const auto& rec : index.records) out << record_to_json(rec) << "\n";
}

EmbeddingIndex load_db(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_db: cannot open " + path);
  std::string line;
  bool have_header = false;
  std::vector<AssetRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (!have_header) {
      nlohmann::json header = nlohmann::json::parse(line);
      if (header.value("format", "") != "redistill-db" ||
          header.value("version", 0) != 1)
        throw std::runtime_error("load_db: unrecognized header in " + path);
      have_header = true;
      continue;
    }
    records.push_back(record_from_json(line));
  }
  // An empty file is a valid empty index.
  return build_index(std::move(records));
}

}  // namespace redistill
