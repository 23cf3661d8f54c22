#include <atomic>
#include <cstdlib>
#include <string>

#include "tipcast/kernels.hpp"

namespace tipcast::kernels {
namespace {

SimdLevel probe_cpu() {
#if defined(TIPCAST_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return SimdLevel::Avx2;
#endif
  return SimdLevel::Scalar;
}

// TIPCAST_SIMD=scalar forces the reference path process-wide.
SimdLevel initial_level() {
  const SimdLevel detected = detected_level();
  if (const char* env = std::getenv("TIPCAST_SIMD")) {
    if (std::string(env) == "scalar") return SimdLevel::Scalar;
  }
  return detected;
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{&table_for(initial_level())};
  return table;
}

std::atomic<SimdLevel>& current_level() {
  static std::atomic<SimdLevel> level{initial_level()};
  return level;
}

}  // namespace

std::string_view to_string(SimdLevel level) {
  switch (level) {
    case SimdLevel::Avx2:
      return "avx2";
    case SimdLevel::Scalar:
      break;
  }
  return "scalar";
}

SimdLevel detected_level() {
  static const SimdLevel level = probe_cpu();
  return level;
}

SimdLevel active_level() { return current_level().load(std::memory_order_relaxed); }

SimdLevel set_level(SimdLevel level) {
  if (static_cast<int>(level) > static_cast<int>(detected_level())) level = detected_level();
  current().store(&table_for(level), std::memory_order_relaxed);
  current_level().store(level, std::memory_order_relaxed);
  return level;
}

const KernelTable& table_for(SimdLevel level) {
#if defined(TIPCAST_HAVE_AVX2)
  if (level == SimdLevel::Avx2) return avx2_table();
#else
  (void)level;
#endif
  return scalar_table();
}

double dot(const double* a, const double* b, std::size_t n) {
  return current().load(std::memory_order_relaxed)->dot(a, b, n);
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  current().load(std::memory_order_relaxed)->axpy(alpha, x, y, n);
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  current().load(std::memory_order_relaxed)->gemm_nn(a, b, c, m, k, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  current().load(std::memory_order_relaxed)->gemm_tn(a, b, c, m, k, n, accumulate);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k, bool accumulate) {
  current().load(std::memory_order_relaxed)->gemm_nt(a, b, c, m, n, k, accumulate);
}

void sq_dist(const double* x, const double* y, double* out, std::size_t nx, std::size_t ny,
             std::size_t d) {
  current().load(std::memory_order_relaxed)->sq_dist(x, y, out, nx, ny, d);
}

}  // namespace tipcast::kernels
