#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "hmx/nn/params.hpp"
#include "hmx/numerics/adam.hpp"
#include "hmx/numerics/prng.hpp"

namespace hmx::policy {

// Welford running mean / variance (population).
class RunningStats {
 public:
  explicit RunningStats(std::size_t dim = 1) : mean_(dim, 0.0), m2_(dim, 0.0) {}

  void push(std::span<const double> x);
  void push(double x) { push(std::span<const double>(&x, 1)); }
  std::size_t dim() const noexcept { return mean_.size(); }
  double count() const noexcept { return count_; }
  const std::vector<double>& mean() const noexcept { return mean_; }
  std::vector<double> variance() const;

  // Internals for serialization.
  void restore(double count, std::vector<double> mean, std::vector<double> m2);
  const std::vector<double>& m2() const noexcept { return m2_; }

 private:
  double count_ = 0.0;
  std::vector<double> mean_, m2_;
};

struct PolicyNetConfig {
  std::size_t input_dim = 0;   // observation + goal features
  std::size_t action_dim = 0;
  std::vector<std::size_t> hidden{64, 64};
  double init_log_std = 0.0;

  void validate() const;
  friend bool operator==(const PolicyNetConfig&, const PolicyNetConfig&) = default;
};

inline constexpr double kMinLogStd = -5.0;
inline constexpr double kMaxLogStd = 2.0;

// Tanh MLP actor (Gaussian means, state-independent log-std) and tanh MLP
// critic, sharing one parameter store. Inputs are standardized with running
// statistics that are frozen outside data collection.
class PolicyNet {
 public:
  PolicyNet() = default;
  explicit PolicyNet(PolicyNetConfig cfg);  // all parameters zero
  static PolicyNet random_init(PolicyNetConfig cfg, std::uint64_t seed);

  const PolicyNetConfig& config() const noexcept { return cfg_; }
  nn::ParamStore& params() noexcept { return params_; }
  const nn::ParamStore& params() const noexcept { return params_; }
  RunningStats& input_stats() noexcept { return input_stats_; }
  const RunningStats& input_stats() const noexcept { return input_stats_; }

  // (x - mean) / sqrt(var + 1e-8), clipped to +-10; identity before any data.
  std::vector<double> normalize(std::span<const double> raw) const;

  struct Forward {
    std::vector<double> mean;   // n x action_dim
    std::vector<double> value;  // n
    std::vector<double> log_std;  // action_dim, clamped
  };
  // x: n normalized inputs. tapes (if set) keep activations for backward.
  struct Tape;
  Forward forward(std::span<const double> x, std::size_t n, Tape* tape = nullptr) const;
  // Accumulates into grad given dL/dmean (n x A), dL/dvalue (n) and
  // dL/dlog_std (A, after the clamp).
  void backward(const Tape& tape, std::span<const double> x, std::size_t n, std::span<const double> dmean,
                std::span<const double> dvalue, std::span<const double> dlog_std, std::span<double> grad) const;

  // Deterministic action (the mean) for a raw input.
  std::vector<double> act_mean(std::span<const double> raw) const;
  // Sample from the Gaussian; log_prob receives log pi(a|s).
  std::vector<double> act_sample(std::span<const double> raw, numerics::Prng& rng, double* log_prob) const;

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;
  static PolicyNet deserialize(std::string bytes);
  static PolicyNet load(const std::filesystem::path& path);

 private:
  struct Mlp {
    std::vector<std::size_t> sizes;  // in, hidden..., out
    std::vector<std::size_t> w, b;
  };
  void build();
  std::vector<double> mlp_forward(const Mlp& m, std::span<const double> x, std::size_t n,
                                  std::vector<std::vector<double>>* acts) const;
  void mlp_backward(const Mlp& m, const std::vector<std::vector<double>>& acts, std::span<const double> x,
                    std::size_t n, std::span<const double> dy, std::span<double> grad) const;

  PolicyNetConfig cfg_;
  nn::ParamStore params_;
  Mlp actor_, critic_;
  std::size_t log_std_ = 0;
  RunningStats input_stats_;
};

struct PolicyNet::Tape {
  std::vector<std::vector<double>> actor, critic;
};

double gaussian_log_prob(std::span<const double> a, std::span<const double> mean, std::span<const double> log_std);

struct GaeResult {
  std::vector<double> advantages, returns;
};

// delta_t = r_t + gamma V_{t+1} (1 - done_t) - V_t, A_t = delta_t + gamma
// lambda (1 - done_t) A_{t+1}; V_{T} = bootstrap. returns = A + V.
GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
              double bootstrap, double gamma, double lambda);

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  std::size_t rollout_len = 21;
  std::size_t epochs_per_rollout = 5;
  std::size_t minibatches = 4;
  double entropy_coef = 0.01;
  double value_coef = 1.0;
  double clip = 0.2;
  double learning_rate = 1e-3;
  std::size_t num_envs = 16;
  bool reward_normalization = true;
  double max_grad_norm = 1.0;  // global gradient-norm clip per minibatch; 0 disables

  void validate() const;
};

struct PpoBatch {
  std::size_t input_dim = 0, action_dim = 0;
  std::vector<double> inputs;   // normalized, n x input_dim
  std::vector<double> actions;  // n x action_dim
  std::vector<double> old_log_prob, advantages, returns;

  std::size_t size() const noexcept { return old_log_prob.size(); }
};

struct PpoLoss {
  double policy = 0.0;          // -mean min(r A, clip(r) A)
  double policy_unclipped = 0.0;  // -mean r A
  double value = 0.0;           // mean (V - R)^2
  double entropy = 0.0;         // mean entropy of the action distribution
  double total = 0.0;           // policy + c1 value - c2 entropy
  double clip_fraction = 0.0;
  double max_ratio_in_clipped_term = 0.0;  // max over samples of clip(r) where the clipped branch is taken
  double min_ratio_in_clipped_term = 0.0;
};

// Loss over batch rows `rows` (all rows when empty), advantages used as given.
// Adds the gradient into grad when non-empty.
PpoLoss ppo_loss(const PolicyNet& net, const PpoBatch& batch, std::span<const std::size_t> rows, const PpoConfig& cfg,
                 std::span<double> grad);

// Normalizes advantages over the batch, then epochs x minibatches Adam steps.
// Returns the mean loss over all minibatch evaluations. Throws NumericError
// with diagnostics on a non-finite loss.
PpoLoss ppo_update(PolicyNet& net, numerics::Adam& opt, PpoBatch batch, const PpoConfig& cfg, numerics::Prng& rng);

}  // namespace hmx::policy
