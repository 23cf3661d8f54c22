// Dense float64 kernels with scalar reference implementations and
// runtime-selected SIMD variants.
//
// All matrices are row-major and contiguous. The scalar variants are the
// reference; SIMD variants must agree with them to rounding (FMA contraction
// is the only permitted difference).
#pragma once

#include <cstddef>
#include <string_view>

namespace tipcast::kernels {

enum class SimdLevel { Scalar = 0, Avx2 = 1 };

std::string_view to_string(SimdLevel level);

/// Best level supported by the running CPU (and compiled in).
SimdLevel detected_level();

/// Level currently used by the dispatching entry points.
SimdLevel active_level();

/// Override the dispatch level. Requests above detected_level() are clamped.
/// Returns the level actually installed.
SimdLevel set_level(SimdLevel level);

/// Restores the previous level on scope exit.
class ScopedLevel {
 public:
  explicit ScopedLevel(SimdLevel level) : prev_(active_level()) { set_level(level); }
  ~ScopedLevel() { set_level(prev_); }
  ScopedLevel(const ScopedLevel&) = delete;
  ScopedLevel& operator=(const ScopedLevel&) = delete;

 private:
  SimdLevel prev_;
};

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // C[m x n] (+)= A[m x k] * B[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  // C[k x n] (+)= A[m x k]^T * B[m x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                  std::size_t n, bool accumulate);
  // C[m x k] (+)= A[m x n] * B[k x n]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                  std::size_t k, bool accumulate);
  // D[i, j] = ||x_i - y_j||^2 for X[nx x d], Y[ny x d]
  void (*sq_dist)(const double* x, const double* y, double* out, std::size_t nx, std::size_t ny,
                  std::size_t d);
};

const KernelTable& scalar_table();
#if defined(TIPCAST_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
const KernelTable& table_for(SimdLevel level);

// Dispatching entry points.
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate = false);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate = false);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k, bool accumulate = false);
void sq_dist(const double* x, const double* y, double* out, std::size_t nx, std::size_t ny,
             std::size_t d);

}  // namespace tipcast::kernels
