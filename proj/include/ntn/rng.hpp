// SPDX-License-Identifier: Apache-2.0
// Seed derivation so every random draw is a pure function of (seed, stream, index).
#pragma once

#include <cstdint>
#include <random>

namespace ntn {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0) {
  return Rng(derive_seed(seed, stream, index));
}

// Stream tags.
namespace streams {
inline constexpr std::uint64_t kDemand = 0x44454d41ULL;
inline constexpr std::uint64_t kScatter = 0x53434154ULL;
inline constexpr std::uint64_t kFixedRb = 0x46495852ULL;
inline constexpr std::uint64_t kPolicy = 0x504f4c49ULL;
inline constexpr std::uint64_t kInit = 0x494e4954ULL;
inline constexpr std::uint64_t kBatch = 0x42415443ULL;
inline constexpr std::uint64_t kHighInit = 0x48494748ULL;
inline constexpr std::uint64_t kTabular = 0x54414255ULL;
inline constexpr std::uint64_t kSuite = 0x53554954ULL;
}  // namespace streams

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace ntn
