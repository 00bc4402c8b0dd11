#include "redistill/embedding.hpp"

#include <cmath>
#include <stdexcept>

#include "redistill/rng.hpp"

namespace redistill {

Eigen::VectorXd embed_text(const std::vector<std::string>& tokens) {
  if (tokens.empty()) throw std::invalid_argument("embed_text: empty token list");
  Eigen::VectorXd v = Eigen::VectorXd::Zero(kEmbeddingDim);
  for (const auto& token : tokens) {
    const std::uint64_t h = fnv1a64(token);
    const int bin = static_cast<int>(h % kEmbeddingDim);
    const double sign = ((h >> 6) & 1ULL) ? 1.0 : -1.0;
    v(bin) += sign;
  }
  const double n = v.norm();
  if (n == 0.0) {
    // Tokens cancelled pairwise in every bin; fall back to a canonical unit
    // vector so the output stays deterministic and unit-norm.
    v(0) = 1.0;
    return v;
  }
  return v / n;
}

ImageEmbedding embed_image(const Eigen::MatrixXd& pixels) {
  if (pixels.size() == 0) throw std::invalid_argument("embed_image: empty image");
  constexpr int kPool = 8;
  Eigen::MatrixXd pooled = Eigen::MatrixXd::Zero(kPool, kPool);
  Eigen::MatrixXd counts = Eigen::MatrixXd::Zero(kPool, kPool);
  for (int r = 0; r < pixels.rows(); ++r) {
    const int br = std::min<int>(kPool - 1, r * kPool / static_cast<int>(pixels.rows()));
    for (int c = 0; c < pixels.cols(); ++c) {
      const int bc = std::min<int>(kPool - 1, c * kPool / static_cast<int>(pixels.cols()));
      pooled(br, bc) += pixels(r, c);
      counts(br, bc) += 1.0;
    }
  }
  for (int r = 0; r < kPool; ++r)
    for (int c = 0; c < kPool; ++c)
      if (counts(r, c) > 0.0) pooled(r, c) /= counts(r, c);

  Eigen::VectorXd flat(kEmbeddingDim);
  int k = 0;
  for (int r = 0; r < kPool; ++r)
    for (int c = 0; c < kPool; ++c) flat(k++) = pooled(r, c);
  flat.array() -= flat.mean();

  ImageEmbedding out;
  const double n = flat.norm();
  if (n < 1e-12) {
    out.v = Eigen::VectorXd::Zero(kEmbeddingDim);
    out.v(0) = 1.0;
    out.low_signal = true;
  } else {
    out.v = flat / n;
  }
  return out;
}

}  // namespace redistill
