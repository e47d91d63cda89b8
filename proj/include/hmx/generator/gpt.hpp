#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hmx/nn/params.hpp"
#include "hmx/numerics/adam.hpp"
#include "hmx/numerics/prng.hpp"

namespace hmx::generator {

enum class Positional { Learned, Sinusoidal };

struct GptConfig {
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t model_dim = 64;
  // Positions including the text-conditioning position 0.
  std::size_t context_len = 72;
  std::size_t vocab = 65;  // codebook size + 1; the last symbol is End
  std::size_t d_text = 64;
  double dropout = 0.0;
  Positional positional = Positional::Learned;

  static GptConfig desk(std::size_t codebook_size);
  // 18 layers, 16 heads, width 1024.
  static GptConfig full_scale(std::size_t codebook_size);

  int end_token() const noexcept { return static_cast<int>(vocab) - 1; }
  void validate() const;
  friend bool operator==(const GptConfig&, const GptConfig&) = default;
};

struct TokenDistribution {
  std::vector<double> probs;  // vocab entries summing to 1
};

struct Sampling {
  enum class Mode { Greedy, TopK } mode = Mode::Greedy;
  std::size_t top_k = 8;
  double temperature = 1.0;
};

// Decoder-only transformer with pre-layer-norm blocks and GELU MLPs. Position
// 0 holds the projected text embedding; position i >= 1 holds token i-1.
class Gpt {
 public:
  // All parameters zero (uniform predictions).
  explicit Gpt(GptConfig cfg);
  static Gpt random_init(GptConfig cfg, std::uint64_t seed);

  const GptConfig& config() const noexcept { return cfg_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }

  // Distribution of the token following `prefix`. Requires prefix.size() + 1
  // <= context_len.
  TokenDistribution next_distribution(std::span<const double> text, std::span<const int> prefix) const;
  // Distributions after every prefix length 0..tokens.size() in one pass.
  std::vector<TokenDistribution> all_distributions(std::span<const double> text, std::span<const int> tokens) const;

  // Sum over positions of -log p(s_i | s_<i, text) for the full sequence
  // (ending in End). Adds the gradient into grad when non-empty. correct (if
  // set) receives the number of positions whose argmax equals the target.
  // dropout_rng enables dropout when cfg.dropout > 0.
  double sequence_nll(std::span<const double> text, std::span<const int> sequence, std::span<double> grad,
                      std::size_t* correct = nullptr, numerics::Prng* dropout_rng = nullptr) const;

  // Samples until End or max_tokens; the End marker is not included.
  std::vector<int> generate(std::span<const double> text, const Sampling& sampling, std::size_t max_tokens,
                            std::uint64_t seed) const;

  std::string serialize(const std::string& embedder_name, std::uint64_t tokenizer_hash) const;
  void save(const std::filesystem::path& path, const std::string& embedder_name, std::uint64_t tokenizer_hash) const;
  struct Loaded;
  static Loaded deserialize(std::string bytes);
  static Loaded load(const std::filesystem::path& path);

 private:
  struct Block {
    std::size_t ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
  };
  struct Tape;
  void build();
  void check_inputs(std::span<const double> text, std::span<const int> tokens, std::size_t positions) const;
  // Logits for every position (n x vocab), n = tokens.size() + 1.
  std::vector<double> forward(std::span<const double> text, std::span<const int> tokens, Tape* tape,
                              numerics::Prng* dropout_rng) const;
  void backward(const Tape& tape, std::span<const double> text, std::span<const int> tokens,
                std::span<const double> dlogits, std::span<double> grad) const;

  GptConfig cfg_;
  nn::ParamStore params_;
  std::size_t text_w_ = 0, text_b_ = 0, tok_emb_ = 0, pos_emb_ = 0, lnf_g_ = 0, lnf_b_ = 0, head_w_ = 0, head_b_ = 0;
  std::vector<Block> blocks_;
};

struct Gpt::Loaded {
  Gpt model;
  std::string embedder_name;
  std::uint64_t tokenizer_hash = 0;
};

struct TrainingPair {
  std::vector<double> text;  // embedding
  std::vector<int> tokens;   // codebook indices followed by End
};

struct GptTrainConfig {
  std::size_t steps = 2000;
  std::size_t batch = 8;
  numerics::AdamConfig adam{3e-3};
  std::size_t warmup_steps = 50;
  double final_lr_scale = 0.1;
  // Evaluate training accuracy every eval_every steps; stop early once it
  // reaches stop_accuracy (1.0 disables early stop unless perfect).
  std::size_t eval_every = 50;
  double stop_accuracy = 1.1;

  void validate() const;
};

struct GptLogEntry {
  std::size_t step = 0;
  double loss_per_token = 0.0;  // mean NLL on the step's batch
  double train_accuracy = -1.0; // next-token accuracy over the dataset, when evaluated
};

struct GptTrainLog {
  std::vector<GptLogEntry> entries;
  std::size_t steps_run = 0;
  double final_accuracy = 0.0;
};

// Next-token accuracy (argmax) and mean NLL per token over the dataset.
struct GptEval {
  double accuracy = 0.0;
  double nll_per_token = 0.0;
};
GptEval evaluate_gpt(const Gpt& model, std::span<const TrainingPair> data);

// Adam on the dataset NLL (mean per token over a random batch of pairs).
// Throws ValidationError when a token is outside the vocabulary or a sequence
// does not fit the context; DivergenceError on a non-finite loss.
Gpt train_gpt(const GptConfig& cfg, const GptTrainConfig& tcfg, std::span<const TrainingPair> data,
              std::uint64_t seed, GptTrainLog* log = nullptr);

}  // namespace hmx::generator
