#pragma once

// Dense double-precision kernels used by the training and search inner loops.
//
// Every kernel has a scalar reference implementation. Vector variants (AVX2+FMA
// on x86-64, NEON on aarch64) are selected once at startup from the CPU feature
// set; HMX_SIMD=scalar|avx2|neon in the environment overrides the choice. Vector
// variants reassociate sums, so results agree with the scalar reference to
// rounding, not bitwise. Within one process the selected table is fixed, which
// keeps every higher-level routine deterministic.

#include <cstddef>
#include <span>
#include <string_view>

namespace hmx::simd {

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  double (*l1_distance)(const double* a, const double* b, std::size_t n);
  // x *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
};

bool backend_supported(Backend b) noexcept;
// Throws std::invalid_argument when the backend is not available on this CPU.
void select_backend(Backend b);
Backend active_backend() noexcept;
std::string_view backend_name(Backend b) noexcept;
const KernelTable& table_for(Backend b);
const KernelTable& kernels() noexcept;

namespace scalar {
const KernelTable& table() noexcept;
}
#if defined(__x86_64__) || defined(_M_X64)
namespace avx2 {
const KernelTable& table() noexcept;
}
#endif
#if defined(__aarch64__)
namespace neon {
const KernelTable& table() noexcept;
}
#endif

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  return kernels().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) noexcept {
  kernels().axpy(alpha, x.data(), y.data(), x.size());
}
inline double squared_distance(std::span<const double> a, std::span<const double> b) noexcept {
  return kernels().squared_distance(a.data(), b.data(), a.size());
}
inline double l1_distance(std::span<const double> a, std::span<const double> b) noexcept {
  return kernels().l1_distance(a.data(), b.data(), a.size());
}
inline void scale(double alpha, std::span<double> x) noexcept {
  kernels().scale(alpha, x.data(), x.size());
}

}  // namespace hmx::simd
