#pragma once

// Row-major matrix products on top of the dispatched kernels. All routines
// accumulate into C (C += op(A) * op(B)); callers zero C when they need a
// plain product.

#include <cstddef>
#include <span>

namespace hmx::simd {

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
// C[m x n] += A[m x k] * B[n x k]^T
void gemm_nt(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
// C[m x n] += A[k x m]^T * B[k x n]
void gemm_tn(std::size_t m, std::size_t k, std::size_t n, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

}  // namespace hmx::simd
