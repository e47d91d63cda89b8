#include "hmx/simd/linalg.hpp"

#include "hmx/simd/kernels.hpp"

namespace hmx::simd {

void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  const KernelTable& kt = kernels();
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.data() + i * n;
    const double* ai = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      if (ai[p] != 0.0) kt.axpy(ai[p], b.data() + p * n, ci, n);
    }
  }
}

void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  const KernelTable& kt = kernels();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a.data() + i * k;
    double* ci = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] += kt.dot(ai, b.data() + j * k, k);
  }
}

void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  const KernelTable& kt = kernels();
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a.data() + p * m;
    const double* bp = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      if (ap[i] != 0.0) kt.axpy(ap[i], bp, c.data() + i * n, n);
    }
  }
}

}  // namespace hmx::simd
