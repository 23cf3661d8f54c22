// Counter-based random numbers (Philox4x32-10).
//
// Every draw is a pure function of (key, counter), so noise matrices can be
// regenerated element by element on any platform. Streams:
//   * NoiseSeq element (step t, flux f) uses key = seed, counter = (t, f, 0, 0).
//   * Rng(seed, stream) draws sequentially from counter = (i, stream, 1, 0).
//   * split_seed(base, k) derives member seeds; it is a bijection in k.
#pragma once

#include <array>
#include <cstdint>

namespace tipcast {

using Philox4x32 = std::array<std::uint32_t, 4>;

Philox4x32 philox4x32_10(Philox4x32 counter, std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for member `k` of an ensemble rooted at `base`. Distinct k give
/// distinct seeds for a fixed base.
std::uint64_t split_seed(std::uint64_t base, std::uint64_t k);

/// Maps 53 random bits onto [0, 1).
inline double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

/// Standard normal from two uniforms via Box-Muller (cosine branch).
double box_muller(double u1, double u2);

/// Standard normal deviate at a fixed (seed, row, col) coordinate.
double normal_at(std::uint64_t seed, std::uint64_t row, std::uint64_t col);

/// Sequential generator over a Philox stream.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

  std::uint64_t next_u64();
  double uniform() { return to_unit(next_u64()); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const { return seed_; }

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int available_ = 0;
};

}  // namespace tipcast
