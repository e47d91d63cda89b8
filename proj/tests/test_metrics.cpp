#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "hmx/error.hpp"
#include "hmx/metrics/metrics.hpp"
#include "hmx/numerics/prng.hpp"

using namespace hmx::metrics;
using hmx::numerics::Prng;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double shift = 0.0) {
  Prng rng(seed);
  Matrix m(r, c);
  for (double& v : m.data) v = rng.normal() + shift;
  return m;
}

FeatureSet set_of(Matrix m) { return FeatureSet{std::move(m), Source::Generated}; }

// Closed-form 2-D Frechet distance from hand-computed moments: for 2x2 SPD
// A, B, Tr sqrt(AB) = sqrt(tr(AB) + 2 sqrt(det(AB))).
double fid_2d(const Matrix& a, const Matrix& b) {
  auto mom = [](const Matrix& x, double mu[2], double s[3]) {
    const double n = static_cast<double>(x.rows);
    mu[0] = mu[1] = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      mu[0] += x(i, 0) / n;
      mu[1] += x(i, 1) / n;
    }
    s[0] = s[1] = s[2] = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double u = x(i, 0) - mu[0], v = x(i, 1) - mu[1];
      s[0] += u * u / (n - 1);
      s[1] += u * v / (n - 1);
      s[2] += v * v / (n - 1);
    }
    s[0] += 1e-6;
    s[2] += 1e-6;
  };
  double ma[2], mb[2], sa[3], sb[3];
  mom(a, ma, sa);
  mom(b, mb, sb);
  const double p00 = sa[0] * sb[0] + sa[1] * sb[1], p11 = sa[1] * sb[1] + sa[2] * sb[2];
  const double det = (sa[0] * sa[2] - sa[1] * sa[1]) * (sb[0] * sb[2] - sb[1] * sb[1]);
  const double tr_sqrt = std::sqrt(p00 + p11 + 2.0 * std::sqrt(det));
  const double dm = (ma[0] - mb[0]) * (ma[0] - mb[0]) + (ma[1] - mb[1]) * (ma[1] - mb[1]);
  return dm + sa[0] + sa[2] + sb[0] + sb[2] - 2.0 * tr_sqrt;
}

// Rank of the true text by full sort on (distance, index).
double r_precision_sorted(const Matrix& m, const Matrix& t, std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < m.rows; ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < t.rows; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < m.cols; ++c) s += (m(i, c) - t(j, c)) * (m(i, c) - t(j, c));
      d.emplace_back(s, j);
    }
    std::sort(d.begin(), d.end());
    for (std::size_t r = 0; r < k; ++r)
      if (d[r].second == i) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(m.rows);
}

}  // namespace

TEST_CASE("fid: zero on identical sets, symmetric, non-negative") {
  const auto a = set_of(random_matrix(60, 5, 1));
  const auto b = set_of(random_matrix(45, 5, 2, 0.3));
  CHECK(std::abs(fid(a, a)) <= 1e-8);
  CHECK(std::abs(fid(a, b) - fid(b, a)) <= 1e-10);
  CHECK(fid(a, b) > 0.0);
  CHECK_THROWS_AS(fid(a, set_of(random_matrix(10, 4, 3))), hmx::DimensionError);
  CHECK_THROWS_AS(fid(a, set_of(random_matrix(1, 5, 3))), hmx::ValidationError);
}

TEST_CASE("fid: moment-matched N(0,1) vs N(1,1) in 1-D is 1") {
  const std::size_t m = 100;
  Matrix g(m, 1), r(m, 1);
  // +-s alternating: mean 0 and unbiased variance exactly 1.
  const double s = std::sqrt(static_cast<double>(m - 1) / static_cast<double>(m));
  for (std::size_t i = 0; i < m; ++i) {
    g(i, 0) = i % 2 ? s : -s;
    r(i, 0) = g(i, 0) + 1.0;
  }
  CHECK(fid(set_of(g), set_of(r)) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("fid: matches the closed-form 2-D Frechet distance") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto a = random_matrix(30, 2, 10 + seed);
    auto b = random_matrix(40, 2, 50 + seed, 0.5);
    for (std::size_t i = 0; i < b.rows; ++i) b(i, 1) += 0.7 * b(i, 0);
    CHECK(fid(set_of(a), set_of(b)) == doctest::Approx(fid_2d(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("diversity") {
  CHECK(kDefaultDiversityPairs == 300);
  CHECK(diversity_pairs(10, kDefaultDiversityPairs, 4).size() == 300);
  for (const auto& [i, j] : diversity_pairs(5, 1000, 9)) {
    CHECK(i != j);
    CHECK(i < 5);
    CHECK(j < 5);
  }
  CHECK(diversity(set_of(Matrix(8, 3, 0.25))) == 0.0);

  Matrix two(2, 3);
  two(0, 0) = 1.0;
  two(1, 1) = 2.0;
  two(1, 2) = 2.0;
  CHECK(diversity(set_of(two), 7, 3) == doctest::Approx(3.0).epsilon(1e-15));

  // Relabeling the rows and the injected pairs together leaves the value.
  const auto base = random_matrix(12, 4, 6);
  std::vector<std::size_t> perm(12);
  std::iota(perm.begin(), perm.end(), 0);
  Prng rng(8);
  for (std::size_t i = 12; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  Matrix shuffled(12, 4);
  for (std::size_t i = 0; i < 12; ++i) std::copy_n(base.row(i).begin(), 4, shuffled.row(perm[i]).begin());
  const auto pairs = diversity_pairs(12, 300, 2);
  std::vector<std::pair<std::size_t, std::size_t>> mapped;
  for (const auto& [i, j] : pairs) mapped.emplace_back(perm[i], perm[j]);
  CHECK(diversity(set_of(base), pairs) == doctest::Approx(diversity(set_of(shuffled), mapped)).epsilon(1e-14));

  CHECK_THROWS_AS(diversity(set_of(Matrix(1, 3))), hmx::ValidationError);
}

TEST_CASE("mm_dist") {
  const auto a = random_matrix(9, 4, 3);
  CHECK(mm_dist(a, a) == 0.0);
  auto b = a;
  for (std::size_t i = 0; i < b.rows; ++i) b(i, i % 4) += 1.0;
  CHECK(mm_dist(a, b) == doctest::Approx(1.0).epsilon(1e-14));
  const auto c = random_matrix(9, 4, 4);
  double want = 0.0;
  for (std::size_t i = 0; i < 9; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < 4; ++j) s += (a(i, j) - c(i, j)) * (a(i, j) - c(i, j));
    want += std::sqrt(s) / 9.0;
  }
  CHECK(mm_dist(a, c) == doctest::Approx(want).epsilon(1e-13));
  CHECK_THROWS_AS(mm_dist(a, random_matrix(8, 4, 1)), hmx::DimensionError);
}

TEST_CASE("r_precision: identity, adversarial, oracle, ties") {
  const auto t = random_matrix(20, 6, 12);
  CHECK(r_precision(t, t) == 1.0);
  CHECK(r_precision(t, t, 19) == 1.0);

  // Texts are the basis vectors; motion i is the sum of three other texts, so
  // those three (distance sqrt 2) outrank its own text (distance 2).
  const std::size_t m = 10;
  Matrix text(m, m), motion(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    text(i, i) = 1.0;
    for (std::size_t k = 1; k <= 3; ++k) motion(i, (i + k) % m) = 1.0;
  }
  CHECK(r_precision(motion, text) == 0.0);
  CHECK(r_precision_sorted(motion, text, 3) == 0.0);

  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto mo = random_matrix(20, 5, 100 + seed), te = random_matrix(20, 5, 200 + seed);
    CHECK(r_precision(mo, te) == r_precision_sorted(mo, te, 3));
    // Small integer grids produce many exact distance ties.
    Prng rng(300 + seed);
    Matrix mi(20, 2), ti(20, 2);
    for (double& v : mi.data) v = static_cast<double>(rng.below(3));
    for (double& v : ti.data) v = static_cast<double>(rng.below(3));
    for (std::size_t k = 1; k <= 5; ++k) CHECK(r_precision(mi, ti, k) == r_precision_sorted(mi, ti, k));
  }
  CHECK_THROWS_AS(r_precision(random_matrix(3, 2, 1), random_matrix(3, 2, 2)), hmx::ValidationError);
}

TEST_CASE("dof-stats embedder") {
  DofStatsEmbedder e;
  CHECK(e.dim() == 81);
  CHECK(e.name() == "dof-stats-81");
  Matrix q(4, 27);
  q(0, 2) = 1.0;
  q(1, 2) = 3.0;
  q(2, 2) = 1.0;
  q(3, 2) = 3.0;
  const auto f = e.embed(q);
  REQUIRE(f.size() == 81);
  CHECK(f[2] == 2.0);
  CHECK(f[27 + 2] == 1.0);
  CHECK(f[54 + 2] == 2.0);
  CHECK(f[0] == 0.0);
  CHECK_THROWS_AS(e.embed(Matrix(1, 27)), hmx::ValidationError);
  CHECK_THROWS_AS(e.embed(Matrix(5, 26)), hmx::DimensionError);
  const auto set = embed_all(e, std::vector<Matrix>{q, q}, Source::Reference);
  CHECK(set.size() == 2);
  CHECK(set.source == Source::Reference);
}

TEST_CASE("feature files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "hmx_test_metrics";
  std::filesystem::create_directories(dir);
  const auto m = random_matrix(7, 3, 21);
  write_features_csv(m, dir / "f.csv");
  write_features_binary(m, dir / "f.bin");
  CHECK(read_features(dir / "f.csv") == m);
  CHECK(read_features(dir / "f.bin") == m);
  {
    std::ofstream(dir / "bad.csv") << "1,2\n3,x\n";
  }
  CHECK_THROWS_AS(read_features(dir / "bad.csv"), hmx::ParseError);
  {
    std::ofstream(dir / "ragged.csv") << "1,2\n3\n";
  }
  CHECK_THROWS_AS(read_features(dir / "ragged.csv"), hmx::ParseError);
  std::filesystem::remove_all(dir);
}
