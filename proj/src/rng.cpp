#include "tipcast/rng.hpp"

#include <cmath>
#include <numbers>

namespace tipcast {
namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 2> key_of(std::uint64_t seed) {
  return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

std::uint64_t join(std::uint32_t lo, std::uint32_t hi) {
  return (static_cast<std::uint64_t>(hi) << 32) | lo;
}

}  // namespace

Philox4x32 philox4x32_10(Philox4x32 ctr, std::array<std::uint32_t, 2> key) {
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kMul0, ctr[0], hi0, lo0);
    mulhilo(kMul1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kWeyl0;
    key[1] += kWeyl1;
  }
  return ctr;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t split_seed(std::uint64_t base, std::uint64_t k) {
  // splitmix64 is a bijection and (k + 1) * odd is a bijection mod 2^64.
  return splitmix64(base + (k + 1) * 0xD1B54A32D192ED03ull);
}

double box_muller(double u1, double u2) {
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));  // 1 - u1 in (0, 1]
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

double normal_at(std::uint64_t seed, std::uint64_t row, std::uint64_t col) {
  const Philox4x32 out = philox4x32_10(
      {static_cast<std::uint32_t>(row), static_cast<std::uint32_t>(row >> 32),
       static_cast<std::uint32_t>(col), static_cast<std::uint32_t>(col >> 32)},
      key_of(seed));
  return box_muller(to_unit(join(out[0], out[1])), to_unit(join(out[2], out[3])));
}

void Rng::refill() {
  const Philox4x32 out = philox4x32_10(
      {static_cast<std::uint32_t>(counter_), static_cast<std::uint32_t>(counter_ >> 32),
       static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32) ^ 1u},
      key_of(seed_));
  ++counter_;
  buffer_ = {join(out[0], out[1]), join(out[2], out[3])};
  available_ = 2;
}

std::uint64_t Rng::next_u64() {
  if (available_ == 0) refill();
  return buffer_[2 - available_--];
}

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return box_muller(u1, u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Lemire-style rejection keeps the result unbiased.
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

}  // namespace tipcast
