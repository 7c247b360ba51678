#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace mfgham {

using Rng = std::mt19937_64;

/// Derives an independent stream from a master seed and a tag path, e.g.
/// `derive_seed(master, {round, level})`. Identical inputs give identical
/// streams on every run and thread count.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * tags.size());
  auto push = [&words](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(master);
  for (auto t : tags) push(t);
  std::seed_seq seq(words.begin(), words.end());
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
}

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> tags = {}) {
  return Rng(derive_seed(master, tags));
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace mfgham
