#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace hmx::generator {

// Seam for the text encoder. Implementations are deterministic and return
// unit-norm vectors of dim() entries.
class TextEmbedder {
 public:
  virtual ~TextEmbedder() = default;
  virtual std::string name() const = 0;
  virtual std::size_t dim() const = 0;
  virtual std::vector<double> embed(std::string_view text) const = 0;
};

// Case-folded, whitespace-tokenized bag of words hashed (FNV-1a 64) into dim
// buckets, L2-normalized. Throws ValidationError on text without any word.
class HashingTextEmbedder final : public TextEmbedder {
 public:
  explicit HashingTextEmbedder(std::size_t dim = 64);
  std::string name() const override;
  std::size_t dim() const override { return dim_; }
  std::vector<double> embed(std::string_view text) const override;

 private:
  std::size_t dim_;
};

std::vector<double> embed_text_default(std::string_view text);

// Resolves names produced by TextEmbedder::name() ("bow-hash-<dim>").
std::unique_ptr<TextEmbedder> make_text_embedder(std::string_view name);

}  // namespace hmx::generator
