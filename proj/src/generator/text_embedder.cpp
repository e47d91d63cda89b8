#include "hmx/generator/text_embedder.hpp"

#include <cctype>
#include <cmath>
#include <string>

#include "hmx/error.hpp"
#include "hmx/numerics/prng.hpp"

namespace hmx::generator {

HashingTextEmbedder::HashingTextEmbedder(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw ValidationError("text embedder: dim must be >= 1");
}

std::string HashingTextEmbedder::name() const { return "bow-hash-" + std::to_string(dim_); }

std::vector<double> HashingTextEmbedder::embed(std::string_view text) const {
  std::vector<double> v(dim_, 0.0);
  std::string word;
  std::size_t words = 0;
  const auto flush = [&] {
    if (word.empty()) return;
    v[numerics::fnv1a64(word) % dim_] += 1.0;
    ++words;
    word.clear();
  };
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      flush();
    } else {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  flush();
  if (words == 0) throw ValidationError("text embedder: empty text");
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

std::vector<double> embed_text_default(std::string_view text) { return HashingTextEmbedder().embed(text); }

std::unique_ptr<TextEmbedder> make_text_embedder(std::string_view name) {
  constexpr std::string_view prefix = "bow-hash-";
  if (name.substr(0, prefix.size()) == prefix) {
    const std::string digits(name.substr(prefix.size()));
    if (!digits.empty() && digits.size() < 7 && digits.find_first_not_of("0123456789") == std::string::npos)
      return std::make_unique<HashingTextEmbedder>(std::stoul(digits));
  }
  throw ValidationError("unknown text embedder '" + std::string(name) + "'");
}

}  // namespace hmx::generator
