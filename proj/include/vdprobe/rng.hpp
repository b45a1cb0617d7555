#pragma once

// Deterministic random streams.
//
// Every stream is keyed by (master_seed, game_id, condition_name, purpose):
//
//   s0   = splitmix64(master_seed)
//   s1   = splitmix64(s0 ^ fnv1a64(game_id))
//   s2   = splitmix64(s1 ^ fnv1a64(condition_name))
//   seed = splitmix64(s2 ^ fnv1a64(purpose))
//
// and drives a std::mt19937_64, whose output sequence is fixed by the C++
// standard. Distributions are implemented here rather than with <random>'s
// distribution classes, whose outputs are implementation-defined. Streams are
// therefore reproducible across compilers and platforms, and adding a
// condition never changes the draws seen by another condition.

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

namespace vdprobe {

// FNV-1a, 64-bit.
constexpr std::uint64_t stable_hash(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::string_view game_id,
                                    std::string_view condition_name,
                                    std::string_view purpose) noexcept {
  std::uint64_t s = splitmix64(master_seed);
  s = splitmix64(s ^ stable_hash(game_id));
  s = splitmix64(s ^ stable_hash(condition_name));
  return splitmix64(s ^ stable_hash(purpose));
}

class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on {0, ..., n-1}; unbiased (rejection sampling).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_index over an empty range");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // True with probability exactly p for p in [0, 1].
  bool bernoulli(double p) { return uniform01() < p; }

 private:
  std::mt19937_64 engine_;
};

inline RandomStream derive_rng(std::uint64_t master_seed, std::string_view game_id,
                               std::string_view condition_name, std::string_view purpose) {
  return RandomStream(derive_seed(master_seed, game_id, condition_name, purpose));
}

}  // namespace vdprobe
