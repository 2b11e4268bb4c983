#pragma once

#include <cstdint>
#include <random>

namespace minimalist {

// 64-bit mixing step (splitmix64). Used to derive well-separated seeds
// from a master seed plus a stream tag, so that independent streams can
// be reproduced regardless of evaluation order.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t mix64(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ (stream * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(mix64(seed)); }

// Independent substream for item `index` of the logical stream `seed`.
// Dataset generation and worker pools draw one substream per item, which
// keeps results identical under any parallel schedule.
inline Rng substream(std::uint64_t seed, std::uint64_t index) {
  return Rng(mix64(seed, index));
}

// Stable tags for the internal streams of a training run.
namespace stream_tag {
constexpr std::uint64_t dataset = 0x01;
constexpr std::uint64_t weight_init = 0x02;
constexpr std::uint64_t epoch_shuffle = 0x03;
constexpr std::uint64_t val_pairs = 0x04;
constexpr std::uint64_t test_pairs = 0x05;
}  // namespace stream_tag

}  // namespace minimalist
