#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

namespace naveval {

/// 64-bit FNV-1a over the bytes of `text`, folding `seed` in first.
/// Used instead of std::hash so derived seeds are stable across platforms
/// and standard library implementations.
inline std::uint64_t fnv1a64(std::string_view text,
                             std::uint64_t seed = 14695981039346656037ull) {
  constexpr std::uint64_t prime = 1099511628211ull;
  std::uint64_t h = seed;
  for (unsigned char c : text) {
    h ^= c;
    h *= prime;
  }
  return h;
}

/// Per-episode seed: mixes the run seed into the FNV state before hashing
/// the episode id, so distinct runs decorrelate and distinct episodes within
/// a run never share a stream.
inline std::uint64_t derive_seed(std::uint64_t run_seed,
                                 std::string_view episode_id) {
  std::uint64_t h = 14695981039346656037ull;
  for (int shift = 0; shift < 64; shift += 8) {
    h ^= (run_seed >> shift) & 0xffu;
    h *= 1099511628211ull;
  }
  return fnv1a64(episode_id, h);
}

/// Uniform draw from [0, bound) by rejection, avoiding the modulo bias and
/// the implementation-defined behavior of std::uniform_int_distribution.
inline std::uint64_t bounded_rand(std::mt19937_64& rng, std::uint64_t bound) {
  if (bound == 0) {
    throw std::invalid_argument("bounded_rand: bound must be positive");
  }
  const std::uint64_t threshold = (0 - bound) % bound;  // 2^64 mod bound
  for (;;) {
    const std::uint64_t v = rng();
    if (v >= threshold) {
      return v % bound;
    }
  }
}

}  // namespace naveval
