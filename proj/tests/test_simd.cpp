#include <cmath>
#include <stdexcept>
#include <vector>

#include "doctest.h"
#include "hmx/numerics/prng.hpp"
#include "hmx/simd/kernels.hpp"
#include "hmx/simd/linalg.hpp"

using namespace hmx::simd;

namespace {

std::vector<double> random_vec(hmx::numerics::Prng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

std::vector<Backend> available() {
  std::vector<Backend> out;
  for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon})
    if (backend_supported(b)) out.push_back(b);
  return out;
}

struct BackendGuard {
  Backend saved = active_backend();
  ~BackendGuard() { select_backend(saved); }
};

}  // namespace

TEST_CASE("every available backend matches the scalar reference") {
  const KernelTable& ref = scalar::table();
  hmx::numerics::Prng rng(11);
  for (Backend b : available()) {
    CAPTURE(backend_name(b));
    const KernelTable& kt = table_for(b);
    // Lengths straddle every vector width and tail size.
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 9u, 15u, 16u, 17u, 63u, 64u, 65u, 1000u}) {
      const auto a = random_vec(rng, n);
      const auto c = random_vec(rng, n);
      const double tol = 1e-13 * static_cast<double>(n + 1);
      CHECK(kt.dot(a.data(), c.data(), n) == doctest::Approx(ref.dot(a.data(), c.data(), n)).epsilon(tol));
      CHECK(std::fabs(kt.squared_distance(a.data(), c.data(), n) - ref.squared_distance(a.data(), c.data(), n)) <=
            tol * (1.0 + ref.squared_distance(a.data(), c.data(), n)));
      CHECK(std::fabs(kt.l1_distance(a.data(), c.data(), n) - ref.l1_distance(a.data(), c.data(), n)) <=
            tol * (1.0 + ref.l1_distance(a.data(), c.data(), n)));

      auto y1 = c, y2 = c;
      ref.axpy(0.37, a.data(), y1.data(), n);
      kt.axpy(0.37, a.data(), y2.data(), n);
      for (std::size_t i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y1[i]).epsilon(1e-15));

      auto s1 = a, s2 = a;
      ref.scale(-1.5, s1.data(), n);
      kt.scale(-1.5, s2.data(), n);
      CHECK(s1 == s2);
    }
  }
}

TEST_CASE("gemm variants agree with a triple loop under every backend") {
  BackendGuard guard;
  hmx::numerics::Prng rng(5);
  const std::size_t m = 7, k = 13, n = 9;
  const auto a = random_vec(rng, m * k);
  const auto b = random_vec(rng, k * n);
  std::vector<double> expect(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < k; ++p) expect[i * n + j] += a[i * k + p] * b[p * n + j];

  // Transposed copies feed the nt / tn forms.
  std::vector<double> bt(n * k), at(k * m);
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];

  for (Backend be : available()) {
    select_backend(be);
    std::vector<double> c1(m * n, 0.0), c2(m * n, 0.0), c3(m * n, 0.0);
    gemm_nn(m, k, n, a, b, c1);
    gemm_nt(m, k, n, a, bt, c2);
    gemm_tn(m, k, n, at, b, c3);
    for (std::size_t i = 0; i < m * n; ++i) {
      CHECK(c1[i] == doctest::Approx(expect[i]).epsilon(1e-12));
      CHECK(c2[i] == doctest::Approx(expect[i]).epsilon(1e-12));
      CHECK(c3[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("selecting an unsupported backend throws") {
  for (Backend b : {Backend::Avx2, Backend::Neon}) {
    if (!backend_supported(b)) CHECK_THROWS_AS(select_backend(b), std::invalid_argument);
  }
  CHECK(backend_supported(Backend::Scalar));
}
