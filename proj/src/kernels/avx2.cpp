// AVX2 + FMA variants. This translation unit is the only one compiled with
// -mavx2 -mfma; callers reach it through the dispatch table after a CPUID check.
#include "tipcast/kernels.hpp"

#include <immintrin.h>

#include <algorithm>

namespace tipcast::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d s = _mm_add_pd(lo, hi);
  s = _mm_add_sd(s, _mm_unpackhi_pd(s, s));
  return _mm_cvtsd_f64(s);
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy_avx2(a[i * k + p], b + p * n, crow, n);
  }
}

void gemm_tn_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + k * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) axpy_avx2(a[i * k + p], brow, c + p * n, n);
  }
}

void gemm_nt_avx2(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                  std::size_t k, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double s = dot_avx2(a + i * n, b + p * n, n);
      c[i * k + p] = accumulate ? c[i * k + p] + s : s;
    }
  }
}

void sq_dist_avx2(const double* x, const double* y, double* out, std::size_t nx, std::size_t ny,
                  std::size_t d) {
  for (std::size_t i = 0; i < nx; ++i) {
    const double* xi = x + i * d;
    for (std::size_t j = 0; j < ny; ++j) {
      const double* yj = y + j * d;
      __m256d acc = _mm256_setzero_pd();
      std::size_t t = 0;
      for (; t + 4 <= d; t += 4) {
        const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(xi + t), _mm256_loadu_pd(yj + t));
        acc = _mm256_fmadd_pd(diff, diff, acc);
      }
      double s = hsum(acc);
      for (; t < d; ++t) {
        const double diff = xi[t] - yj[t];
        s += diff * diff;
      }
      out[i * ny + j] = s;
    }
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{dot_avx2,     axpy_avx2,    gemm_nn_avx2,
                                 gemm_tn_avx2, gemm_nt_avx2, sq_dist_avx2};
  return table;
}

}  // namespace tipcast::kernels
