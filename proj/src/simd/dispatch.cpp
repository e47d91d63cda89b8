#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "hmx/simd/kernels.hpp"

namespace hmx::simd {
namespace {

Backend detect() noexcept {
#if defined(__x86_64__) || defined(_M_X64)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Backend::Avx2;
  return Backend::Scalar;
#elif defined(__aarch64__)
  return Backend::Neon;
#else
  return Backend::Scalar;
#endif
}

Backend initial_backend() noexcept {
  Backend b = detect();
  if (const char* env = std::getenv("HMX_SIMD")) {
    const std::string v(env);
    Backend want = b;
    if (v == "scalar") want = Backend::Scalar;
    else if (v == "avx2") want = Backend::Avx2;
    else if (v == "neon") want = Backend::Neon;
    if (backend_supported(want)) b = want;
  }
  return b;
}

std::atomic<Backend>& current() noexcept {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

}  // namespace

bool backend_supported(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::Neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

void select_backend(Backend b) {
  if (!backend_supported(b)) {
    throw std::invalid_argument("SIMD backend not supported on this CPU: " +
                                std::string(backend_name(b)));
  }
  current().store(b);
}

Backend active_backend() noexcept { return current().load(); }

std::string_view backend_name(Backend b) noexcept {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

const KernelTable& table_for(Backend b) {
  if (!backend_supported(b)) {
    throw std::invalid_argument("SIMD backend not supported on this CPU: " +
                                std::string(backend_name(b)));
  }
  switch (b) {
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::Avx2: return avx2::table();
#endif
#if defined(__aarch64__)
    case Backend::Neon: return neon::table();
#endif
    default: return scalar::table();
  }
}

const KernelTable& kernels() noexcept {
  switch (active_backend()) {
#if defined(__x86_64__) || defined(_M_X64)
    case Backend::Avx2: return avx2::table();
#endif
#if defined(__aarch64__)
    case Backend::Neon: return neon::table();
#endif
    default: return scalar::table();
  }
}

}  // namespace hmx::simd
