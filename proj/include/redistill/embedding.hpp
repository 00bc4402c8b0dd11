#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace redistill {

inline constexpr int kEmbeddingDim = 64;

// Hashed bag-of-tokens text embedding. Each token is hashed with 64-bit
// FNV-1a; the low 6 bits pick one of 64 bins and bit 6 picks the sign. The
// signed counts are summed and L2-normalized. Throws on an empty token list.
Eigen::VectorXd embed_text(const std::vector<std::string>& tokens);

struct ImageEmbedding {
  Eigen::VectorXd v;        // unit-norm 64-vector
  bool low_signal = false;  // set for constant (e.g. all-zero) images
};

// Average-pool the render to 8x8, flatten, subtract the mean, L2-normalize.
// Constant images carry no signal; they map to the first basis vector with
// the low_signal flag set.
ImageEmbedding embed_image(const Eigen::MatrixXd& pixels);

}  // namespace redistill
