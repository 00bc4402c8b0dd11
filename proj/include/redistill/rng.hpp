#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace redistill {

// 64-bit FNV-1a. Also the hash behind the text embedding, so keep it frozen.
constexpr std::uint64_t kFnvOffset = 14695981039346656037ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

constexpr std::uint64_t fnv1a64(std::string_view data,
                                std::uint64_t h = kFnvOffset) {
  for (char c : data) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= kFnvPrime;
  }
  return h;
}

// One master seed drives every component; streams are named so that adding
// a consumer does not shift the draws of another.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view name) {
  std::uint64_t h = fnv1a64(name);
  h ^= master + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

inline std::mt19937_64 make_stream(std::uint64_t master, std::string_view name) {
  return std::mt19937_64(derive_seed(master, name));
}

}  // namespace redistill
