#pragma once

#include <cstdint>

namespace tsvan {

// SplitMix64 finalizer (Steele, Lea, Flood 2014). Constants:
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   z =  z ^ (z >> 31)
std::uint64_t mix64(std::uint64_t z);

// Derives the seed of stream `index` from `master`:
//   mix64(master ^ mix64(index + 0x9E3779B97F4A7C15)).
std::uint64_t split_seed(std::uint64_t master, std::uint64_t index);

// Counter-based generator. Draw i (1-based) is mix64(seed + i * 0x9E3779B97F4A7C15),
// so a stream depends only on (seed, position) and replays identically on any
// platform with 64-bit unsigned arithmetic.
//
// Uniforms take the top 53 bits: u = (draw >> 11) * 2^-53, u in [0, 1).
// Normals use Box-Muller on two consecutive uniforms u1, u2:
//   r = sqrt(-2 ln(1 - u1)), z0 = r cos(2 pi u2), z1 = r sin(2 pi u2)
// z0 is returned first and z1 is cached for the next call.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64();
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace tsvan
