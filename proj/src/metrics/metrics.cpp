#include "hmx/metrics/metrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hmx/error.hpp"
#include "hmx/io/binary.hpp"
#include "hmx/numerics/prng.hpp"
#include "hmx/simd/kernels.hpp"

namespace hmx::metrics {

namespace {

constexpr double kCovRidge = 1e-6;

double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(simd::squared_distance(a, b));
}

void require_rows(const Matrix& m, std::size_t min_rows, const char* what) {
  if (m.rows < min_rows)
    throw ValidationError(std::string(what) + ": need at least " + std::to_string(min_rows) + " rows, got " +
                          std::to_string(m.rows));
}

void check_finite(const Matrix& m, const char* what) {
  for (std::size_t i = 0; i < m.data.size(); ++i)
    if (!std::isfinite(m.data[i]))
      throw NumericError(std::string(what) + ": non-finite feature at row " + std::to_string(i / m.cols) + ", column " +
                         std::to_string(i % m.cols));
}

void check_aligned(const Matrix& a, const Matrix& b, const char* what) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw DimensionError(std::string(what) + ": motion features are " + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols) + ", text features " + std::to_string(b.rows) + "x" +
                         std::to_string(b.cols));
  check_finite(a, what);
  check_finite(b, what);
}

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

void moments(const Matrix& f, Vec& mu, Mat& cov) {
  const auto x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      f.data.data(), static_cast<Eigen::Index>(f.rows), static_cast<Eigen::Index>(f.cols));
  mu = x.colwise().mean().transpose();
  const Mat centered = x.rowwise() - mu.transpose();
  cov = centered.transpose() * centered / static_cast<double>(f.rows - 1);
  cov.diagonal().array() += kCovRidge;
}

// Eigenvalues of a symmetric PSD matrix; tiny negatives are clamped.
Vec psd_eigenvalues(const Mat& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError(std::string(what) + ": eigendecomposition failed");
  Vec ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-8)
      throw NumericError(std::string(what) + ": matrix is not positive semi-definite (eigenvalue " +
                         std::to_string(ev[i]) + ")");
    ev[i] = std::max(ev[i], 0.0);
  }
  return ev;
}

Mat psd_sqrt(const Mat& m) {
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (m + m.transpose()));
  if (es.info() != Eigen::Success) throw NumericError("fid: eigendecomposition failed");
  Vec ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] < -1e-8) throw NumericError("fid: covariance is not positive semi-definite");
    ev[i] = std::sqrt(std::max(ev[i], 0.0));
  }
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

void FeatureSet::validate() const { check_finite(features, "feature set"); }

double fid(const FeatureSet& gen, const FeatureSet& ref) {
  if (gen.dim() != ref.dim())
    throw DimensionError("fid: feature dims differ (" + std::to_string(gen.dim()) + " vs " + std::to_string(ref.dim()) +
                         ")");
  if (gen.dim() == 0) throw DimensionError("fid: zero-dimensional features");
  require_rows(gen.features, 2, "fid (generated)");
  require_rows(ref.features, 2, "fid (reference)");
  gen.validate();
  ref.validate();
  Vec mg, mr;
  Mat sg, sr;
  moments(gen.features, mg, sg);
  moments(ref.features, mr, sr);
  const Mat root_g = psd_sqrt(sg);
  const Vec ev = psd_eigenvalues(root_g * sr * root_g, "fid");
  const double tr_sqrt = ev.array().sqrt().sum();
  const double d = (mg - mr).squaredNorm() + sg.trace() + sr.trace() - 2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

std::vector<std::pair<std::size_t, std::size_t>> diversity_pairs(std::size_t m, std::size_t pairs, std::uint64_t seed) {
  if (m < 2) throw ValidationError("diversity: need at least 2 samples");
  if (pairs == 0) throw ValidationError("diversity: pair count must be positive");
  numerics::Prng rng = numerics::Prng(seed).split("diversity");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(pairs);
  for (std::size_t p = 0; p < pairs; ++p) {
    const auto i = static_cast<std::size_t>(rng.below(m));
    auto j = static_cast<std::size_t>(rng.below(m - 1));
    if (j >= i) ++j;
    out.emplace_back(i, j);
  }
  return out;
}

double diversity(const FeatureSet& set, std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  require_rows(set.features, 2, "diversity");
  if (pairs.empty()) throw ValidationError("diversity: no pairs");
  set.validate();
  double s = 0.0;
  for (const auto& [i, j] : pairs) {
    if (i >= set.size() || j >= set.size() || i == j) throw ValidationError("diversity: invalid index pair");
    s += distance(set.features.row(i), set.features.row(j));
  }
  return s / static_cast<double>(pairs.size());
}

double diversity(const FeatureSet& set, std::size_t pairs, std::uint64_t seed) {
  const auto p = diversity_pairs(set.size(), pairs, seed);
  return diversity(set, p);
}

double mm_dist(const Matrix& motion, const Matrix& text) {
  check_aligned(motion, text, "mm_dist");
  require_rows(motion, 1, "mm_dist");
  double s = 0.0;
  for (std::size_t i = 0; i < motion.rows; ++i) s += distance(motion.row(i), text.row(i));
  return s / static_cast<double>(motion.rows);
}

double r_precision(const Matrix& motion, const Matrix& text, std::size_t top_k) {
  check_aligned(motion, text, "r_precision");
  if (top_k == 0) throw ValidationError("r_precision: top_k must be positive");
  if (motion.rows <= top_k)
    throw ValidationError("r_precision: need more than top_k = " + std::to_string(top_k) + " samples, got " +
                          std::to_string(motion.rows));
  std::size_t hits = 0;
  std::vector<double> d(text.rows);
  for (std::size_t i = 0; i < motion.rows; ++i) {
    for (std::size_t j = 0; j < text.rows; ++j) d[j] = simd::squared_distance(motion.row(i), text.row(j));
    std::size_t rank = 0;
    for (std::size_t j = 0; j < text.rows && rank < top_k; ++j)
      if (d[j] < d[i] || (d[j] == d[i] && j < i)) ++rank;
    if (rank < top_k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(motion.rows);
}

std::vector<double> DofStatsEmbedder::embed(const Matrix& motion) const {
  if (motion.cols != dofs_)
    throw DimensionError("dof-stats embedder: motion has " + std::to_string(motion.cols) + " DoFs, expected " +
                         std::to_string(dofs_));
  if (motion.rows < 2) throw ValidationError("dof-stats embedder: need at least 2 frames");
  const auto n = static_cast<double>(motion.rows);
  std::vector<double> out(3 * dofs_, 0.0);
  for (std::size_t d = 0; d < dofs_; ++d) {
    double mean = 0.0;
    for (std::size_t t = 0; t < motion.rows; ++t) mean += motion(t, d);
    mean /= n;
    double var = 0.0, diff = 0.0;
    for (std::size_t t = 0; t < motion.rows; ++t) {
      var += (motion(t, d) - mean) * (motion(t, d) - mean);
      if (t > 0) diff += std::abs(motion(t, d) - motion(t - 1, d));
    }
    out[d] = mean;
    out[dofs_ + d] = std::sqrt(var / n);
    out[2 * dofs_ + d] = diff / (n - 1.0);
  }
  return out;
}

FeatureSet embed_all(const MotionEmbedder& embedder, std::span<const Matrix> motions, Source source) {
  FeatureSet fs;
  fs.source = source;
  fs.features = Matrix(motions.size(), embedder.dim());
  for (std::size_t i = 0; i < motions.size(); ++i) {
    const auto v = embedder.embed(motions[i]);
    std::copy(v.begin(), v.end(), fs.features.row(i).begin());
  }
  return fs;
}

namespace {

constexpr std::string_view kFeatureMagic = "HMXF";

Matrix read_csv(const std::string& text, const std::string& name) {
  Matrix m;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t end = std::min(line.find(',', pos), line.size());
      std::string cell = line.substr(pos, end - pos);
      const auto a = cell.find_first_not_of(" \t"), b = cell.find_last_not_of(" \t");
      cell = a == std::string::npos ? "" : cell.substr(a, b - a + 1);
      double v = 0.0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (cell.empty() || res.ec != std::errc() || res.ptr != cell.data() + cell.size())
        throw ParseError(name + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      row.push_back(v);
      pos = end + 1;
    }
    if (m.rows == 0) m.cols = row.size();
    if (row.size() != m.cols)
      throw ParseError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(m.cols) + " columns, got " +
                       std::to_string(row.size()));
    m.data.insert(m.data.end(), row.begin(), row.end());
    ++m.rows;
  }
  if (m.rows == 0) throw ParseError(name + ": no feature rows");
  return m;
}

}  // namespace

Matrix read_features(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  std::string bytes = ss.str();
  if (bytes.compare(0, kFeatureMagic.size(), kFeatureMagic) == 0) {
    io::BinaryReader r(std::move(bytes), kFeatureMagic, 1);
    Matrix m;
    m.rows = r.u64();
    m.cols = r.u64();
    if (m.cols != 0 && m.rows > (1ull << 40) / m.cols) r.fail("implausible feature shape");
    m.data.resize(m.rows * m.cols);
    for (double& v : m.data) v = r.f64();
    if (!r.done()) r.fail("trailing bytes after feature data");
    return m;
  }
  return read_csv(bytes, path.string());
}

void write_features_csv(const Matrix& features, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.precision(17);
  for (std::size_t i = 0; i < features.rows; ++i) {
    for (std::size_t j = 0; j < features.cols; ++j) out << (j ? "," : "") << features(i, j);
    out << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

void write_features_binary(const Matrix& features, const std::filesystem::path& path) {
  io::BinaryWriter w(kFeatureMagic, 1);
  w.u64(features.rows);
  w.u64(features.cols);
  for (double v : features.data) w.f64(v);
  w.save(path);
}

}  // namespace hmx::metrics
