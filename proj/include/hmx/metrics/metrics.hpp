#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "hmx/numerics/matrix.hpp"

namespace hmx::metrics {

using numerics::Matrix;

enum class Source { Generated, Reference };

struct FeatureSet {
  Matrix features;  // M x d
  Source source = Source::Generated;

  std::size_t size() const noexcept { return features.rows; }
  std::size_t dim() const noexcept { return features.cols; }
  // Throws NumericError naming the first non-finite entry.
  void validate() const;
};

// ||mu_g - mu_r||^2 + Tr(S_g + S_r - 2 (S_g S_r)^(1/2)), unbiased covariances
// plus 1e-6 I. The trace of the square root comes from the symmetric form
// S_g^(1/2) S_r S_g^(1/2).
double fid(const FeatureSet& gen, const FeatureSet& ref);

inline constexpr std::size_t kDefaultDiversityPairs = 300;

// Seeded index pairs (i != j) over M rows.
std::vector<std::pair<std::size_t, std::size_t>> diversity_pairs(std::size_t m, std::size_t pairs, std::uint64_t seed);
double diversity(const FeatureSet& set, std::span<const std::pair<std::size_t, std::size_t>> pairs);
double diversity(const FeatureSet& set, std::size_t pairs = kDefaultDiversityPairs, std::uint64_t seed = 0);

// Mean row-wise Euclidean distance.
double mm_dist(const Matrix& motion, const Matrix& text);

// Fraction of rows whose own text ranks within the top_k nearest texts; equal
// distances rank the lower index first.
double r_precision(const Matrix& motion, const Matrix& text, std::size_t top_k = 3);

class MotionEmbedder {
 public:
  virtual ~MotionEmbedder() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  // frames x dof motion (DoF positions) to one feature vector.
  virtual std::vector<double> embed(const Matrix& motion) const = 0;
};

// Per-DoF mean, population std and mean |first difference|, concatenated.
class DofStatsEmbedder final : public MotionEmbedder {
 public:
  explicit DofStatsEmbedder(std::size_t dofs = 27) : dofs_(dofs) {}
  std::string name() const override { return "dof-stats-" + std::to_string(3 * dofs_); }
  std::size_t dim() const override { return 3 * dofs_; }
  std::vector<double> embed(const Matrix& motion) const override;

 private:
  std::size_t dofs_;
};

FeatureSet embed_all(const MotionEmbedder& embedder, std::span<const Matrix> motions, Source source);

// Feature matrices as CSV (one row per line, no header) or as the binary
// array file (magic "HMXF", rows, cols, f64 values).
Matrix read_features(const std::filesystem::path& path);
void write_features_csv(const Matrix& features, const std::filesystem::path& path);
void write_features_binary(const Matrix& features, const std::filesystem::path& path);

}  // namespace hmx::metrics
