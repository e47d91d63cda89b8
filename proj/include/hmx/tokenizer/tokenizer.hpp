#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hmx/nn/conv_stack.hpp"
#include "hmx/nn/params.hpp"
#include "hmx/numerics/adam.hpp"
#include "hmx/numerics/matrix.hpp"

namespace hmx::tokenizer {

using numerics::Matrix;

struct TokenizerConfig {
  std::size_t codebook_size = 64;  // N
  std::size_t code_dim = 32;       // d2
  std::size_t downsample = 4;      // k, a power of two
  std::size_t window = 64;         // T
  std::size_t input_dim = 27;      // d1
  // The last root_channels input columns are root channels; the root term of
  // the loss only sees those.
  std::size_t root_channels = 0;
  std::size_t hidden = 64;
  double alpha = 0.02;    // commitment weight
  double beta_fd = 1.0;   // forward-difference weight
  double gamma_root = 0.0;

  // 27 DoF targets, no root channels, gamma_root = 0.
  static TokenizerConfig action();
  // 36 root-relative keypoint coordinates + 3 root velocity channels.
  static TokenizerConfig keypoint();
  // Codebook 2048 x 512, k = 4, T = 64.
  static TokenizerConfig full_scale();

  std::size_t latent_len() const noexcept { return window / downsample; }
  std::size_t stages() const noexcept;
  void validate() const;
  friend bool operator==(const TokenizerConfig&, const TokenizerConfig&) = default;
};

struct Codebook {
  Matrix codes;                            // N x d2
  std::vector<std::int64_t> usage_counts;  // assignments during the last training epoch
};

struct QuantizeResult {
  std::vector<int> indices;
  Matrix quantized;  // rows are codebook entries
};

// Nearest code per latent row (squared Euclidean), ties to the lowest index.
QuantizeResult quantize(const Matrix& latents, const Codebook& codebook);

// indices in [0, N) followed by one End marker (value N).
struct TokenSequence {
  std::vector<int> indices;
  std::size_t source_frames = 0;

  std::span<const int> body() const noexcept {
    return {indices.data(), indices.empty() ? 0 : indices.size() - 1};
  }
  // Throws ValidationError unless End == N appears exactly once, last.
  void validate(std::size_t codebook_size) const;
};

struct LossComponents {
  double recon_l1 = 0.0;
  double recon_fd = 0.0;    // L1 of forward differences
  double recon_root = 0.0;  // L1 of reconstructed root channels
  double recon = 0.0;       // recon_l1 + beta_fd * recon_fd + gamma_root * recon_root
  double embed = 0.0;       // ||sg[Z] - Zq||_F
  double commit = 0.0;      // ||Z - sg[Zq]||_F
  double total = 0.0;       // recon + embed + alpha * commit
};

LossComponents vqvae_loss(const TokenizerConfig& cfg, const Matrix& original, const Matrix& reconstructed,
                          const Matrix& z, const Matrix& zq);

// Quantization state held fixed for the relaxed objective used in gradient
// checks: decoder input is Z + (Zq0 - Z0), the embedding term sees Z0 and the
// commitment term sees Zq0.
struct FrozenQuantization {
  std::vector<std::vector<int>> indices;
  std::vector<Matrix> z0;
  std::vector<Matrix> zq0;
};

class Tokenizer {
 public:
  // All weights, biases and codes zero.
  explicit Tokenizer(TokenizerConfig cfg);
  static Tokenizer random_init(TokenizerConfig cfg, std::uint64_t seed);

  const TokenizerConfig& config() const noexcept { return cfg_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  Codebook& codebook() noexcept { return codebook_; }
  const Codebook& codebook() const noexcept { return codebook_; }
  // Encoder parameters occupy the first encoder_param_count() entries of
  // params().values(); the decoder follows.
  std::size_t encoder_param_count() const noexcept { return encoder_params_; }

  // window: T x d1 -> latents (T/k) x d2.
  Matrix encode(const Matrix& window) const;
  // (T/k) x d2 -> T x d1.
  Matrix decode_latents(const Matrix& zq) const;
  Matrix decode(std::span<const int> indices) const;

  // Whole sequences: frames are cut into T-frame windows, the last one padded
  // by repeating the final frame. source_frames is the padded length.
  TokenSequence tokenize(const Matrix& sequence) const;
  Matrix detokenize(const TokenSequence& tokens) const;

  // Mean over windows of the total loss; when grad is non-empty it receives the
  // straight-through gradient w.r.t. params() (laid out like values()) and
  // code_grad the gradient w.r.t. the codes (embedding term only).
  LossComponents loss_and_grad(std::span<const Matrix> windows, std::span<double> grad, Matrix* code_grad,
                               std::vector<std::vector<int>>* assignments = nullptr) const;
  FrozenQuantization freeze(std::span<const Matrix> windows) const;
  // Same quantities with quantization frozen; differentiable everywhere the
  // network is.
  double relaxed_loss(std::span<const Matrix> windows, const FrozenQuantization& frozen) const;

  void save(const std::filesystem::path& path) const;
  std::string serialize() const;
  static Tokenizer load(const std::filesystem::path& path);
  static Tokenizer deserialize(std::string bytes);
  // FNV-1a of serialize(); generator files record it to pin their tokenizer.
  std::uint64_t content_hash() const;

 private:
  void build();
  LossComponents window_loss(const Matrix& x, const std::vector<int>* frozen_idx, const Matrix* z0,
                             const Matrix* zq0, std::span<double> grad, Matrix* code_grad,
                             std::vector<int>* assignment) const;

  TokenizerConfig cfg_;
  nn::ParamStore params_;
  nn::ConvStack encoder_;
  nn::ConvStack decoder_;
  Codebook codebook_;
  std::size_t encoder_params_ = 0;
};

struct TokenizerTrainConfig {
  std::size_t epochs = 11;
  std::size_t steps_per_epoch = 200;
  std::size_t batch = 16;
  numerics::AdamConfig adam{2e-3};
  // Cosine decay of the learning rate over all steps down to this fraction.
  double final_lr_scale = 0.05;
  // Per-group multipliers on the Adam learning rate.
  double encoder_lr_scale = 0.03;
  double codebook_lr_scale = 30.0;
  bool reset_dead_codes = true;

  void validate() const;
};

struct TokenizerEpochLog {
  std::size_t epoch = 0;
  LossComponents mean;        // averaged over the epoch's steps
  double utilization = 0.0;   // fraction of codes assigned at least once this epoch
  std::size_t codes_reset = 0;
};

struct TokenizerTrainLog {
  std::vector<TokenizerEpochLog> epochs;
};

// Random T-frame crops of each sequence (frames x d1). Deterministic per seed.
// A non-finite loss throws DivergenceError carrying the last good model.
Tokenizer train_tokenizer(const TokenizerConfig& cfg, const TokenizerTrainConfig& tcfg,
                          std::span<const Matrix> dataset, std::uint64_t seed, TokenizerTrainLog* log = nullptr);

// Mean |x - decode(quantize(encode(x)))| per frame per channel over all
// non-overlapping T-frame windows of the dataset.
double reconstruction_l1(const Tokenizer& tok, std::span<const Matrix> dataset);

}  // namespace hmx::tokenizer
