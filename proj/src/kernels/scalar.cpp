#include "tipcast/kernels.hpp"

#include <algorithm>

namespace tipcast::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nn_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      const double* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_tn_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                    std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + k * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    const double* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = a[i * k + p];
      double* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt_scalar(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
                    std::size_t k, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double s = dot_scalar(a + i * n, b + p * n, n);
      c[i * k + p] = accumulate ? c[i * k + p] + s : s;
    }
  }
}

void sq_dist_scalar(const double* x, const double* y, double* out, std::size_t nx, std::size_t ny,
                    std::size_t d) {
  for (std::size_t i = 0; i < nx; ++i) {
    for (std::size_t j = 0; j < ny; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < d; ++t) {
        const double diff = x[i * d + t] - y[j * d + t];
        s += diff * diff;
      }
      out[i * ny + j] = s;
    }
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{dot_scalar,     axpy_scalar,    gemm_nn_scalar,
                                 gemm_tn_scalar, gemm_nt_scalar, sq_dist_scalar};
  return table;
}

}  // namespace tipcast::kernels
