#pragma once

#include <cstdint>
#include <random>

namespace deeplight {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; derives independent child seeds from a master seed.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  return mix_seed(mix_seed(mix_seed(mix_seed(seed) ^ a) ^ (b + 0x51ed27ULL)) ^ (c + 0x2545f491ULL));
}

// Component tags for seed splitting.
namespace seed_tag {
inline constexpr std::uint64_t phantom = 1;
inline constexpr std::uint64_t design = 2;
inline constexpr std::uint64_t init = 3;
inline constexpr std::uint64_t shuffle = 4;
inline constexpr std::uint64_t dropout = 5;
inline constexpr std::uint64_t lasso = 6;
inline constexpr std::uint64_t svm = 7;
inline constexpr std::uint64_t split = 8;
}  // namespace seed_tag

}  // namespace deeplight
