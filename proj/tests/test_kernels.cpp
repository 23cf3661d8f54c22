#include <cmath>
#include <vector>

#include "doctest.h"
#include "tipcast/kernels.hpp"
#include "tipcast/rng.hpp"

using namespace tipcast;
using namespace tipcast::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

// Differences are measured against the largest reference entry; individual
// entries can suffer cancellation that reordered summation exposes.
double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0, scale = 1e-300;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]));
    scale = std::max(scale, std::abs(a[i]));
  }
  return worst / scale;
}

// Sizes straddle the 4- and 8-lane boundaries to exercise every tail path.
const std::size_t kSizes[] = {1, 3, 4, 5, 7, 8, 9, 16, 17, 33};

}  // namespace

TEST_CASE("dispatch reports a level and can be forced to scalar") {
  ScopedLevel guard(SimdLevel::Scalar);
  CHECK(active_level() == SimdLevel::Scalar);
  CHECK(set_level(SimdLevel::Avx2) == detected_level());
}

TEST_CASE("scalar gemm against hand values") {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6};     // 2x3
  const std::vector<double> b = {7, 8, 9, 10, 11, 12};  // 3x2
  std::vector<double> c(4);
  scalar_table().gemm_nn(a.data(), b.data(), c.data(), 2, 3, 2, false);
  CHECK(c == std::vector<double>{58, 64, 139, 154});
  // A^T * A for A 2x3 -> 3x3
  std::vector<double> ata(9);
  scalar_table().gemm_tn(a.data(), a.data(), ata.data(), 2, 3, 3, false);
  CHECK(ata == std::vector<double>{17, 22, 27, 22, 29, 36, 27, 36, 45});
  std::vector<double> aat(4);
  scalar_table().gemm_nt(a.data(), a.data(), aat.data(), 2, 3, 2, false);
  CHECK(aat == std::vector<double>{14, 32, 32, 77});
}

TEST_CASE("simd variants agree with the scalar reference") {
  if (detected_level() == SimdLevel::Scalar) {
    MESSAGE("no SIMD level available; equivalence test is vacuous");
    return;
  }
  const KernelTable& ref = scalar_table();
  const KernelTable& simd = table_for(detected_level());
  Rng rng(17);
  for (std::size_t m : {1u, 2u, 5u}) {
    for (std::size_t k : kSizes) {
      for (std::size_t n : kSizes) {
        const auto a = random_vec(rng, m * k);
        const auto b = random_vec(rng, k * n);
        const auto g = random_vec(rng, m * n);
        std::vector<double> c0(m * n, 0.5), c1(m * n, 0.5);
        ref.gemm_nn(a.data(), b.data(), c0.data(), m, k, n, true);
        simd.gemm_nn(a.data(), b.data(), c1.data(), m, k, n, true);
        CHECK(max_rel_diff(c0, c1) < 1e-12);

        std::vector<double> t0(k * n), t1(k * n);
        ref.gemm_tn(a.data(), g.data(), t0.data(), m, k, n, false);
        simd.gemm_tn(a.data(), g.data(), t1.data(), m, k, n, false);
        CHECK(max_rel_diff(t0, t1) < 1e-12);

        std::vector<double> u0(m * k), u1(m * k);
        ref.gemm_nt(g.data(), b.data(), u0.data(), m, n, k, false);
        simd.gemm_nt(g.data(), b.data(), u1.data(), m, n, k, false);
        CHECK(max_rel_diff(u0, u1) < 1e-12);
      }
    }
  }
  for (std::size_t n : kSizes) {
    const auto x = random_vec(rng, n);
    const auto y = random_vec(rng, n);
    const double d0 = ref.dot(x.data(), y.data(), n);
    const double d1 = simd.dot(x.data(), y.data(), n);
    CHECK(std::abs(d0 - d1) <= 1e-12 * (1.0 + std::abs(d0)));
    std::vector<double> z0 = y, z1 = y;
    ref.axpy(0.3, x.data(), z0.data(), n);
    simd.axpy(0.3, x.data(), z1.data(), n);
    CHECK(max_rel_diff(z0, z1) < 1e-12);
  }
  for (std::size_t d : kSizes) {
    const auto x = random_vec(rng, 6 * d);
    const auto y = random_vec(rng, 4 * d);
    std::vector<double> s0(24), s1(24);
    ref.sq_dist(x.data(), y.data(), s0.data(), 6, 4, d);
    simd.sq_dist(x.data(), y.data(), s1.data(), 6, 4, d);
    CHECK(max_rel_diff(s0, s1) < 1e-12);
  }
}

TEST_CASE("sq_dist matches hand arithmetic") {
  const std::vector<double> x = {0, 0, 1, 1};  // two 2-d points
  const std::vector<double> y = {3, 4};
  std::vector<double> out(2);
  sq_dist(x.data(), y.data(), out.data(), 2, 1, 2);
  CHECK(out[0] == 25.0);
  CHECK(out[1] == 13.0);
}
