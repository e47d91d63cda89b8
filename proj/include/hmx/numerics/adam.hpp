#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace hmx::numerics {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  // Throws ValidationError unless lr > 0, betas in (0,1), epsilon > 0.
  void validate() const;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t t = 0;

  static AdamState zeros(std::size_t n) { return AdamState{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0}; }
};

// Pure form: returns the updated parameters and state. Throws DimensionError on
// length mismatch and NumericError naming the first non-finite gradient index.
std::pair<std::vector<double>, AdamState> adam_step(std::span<const double> params,
                                                    std::span<const double> grads,
                                                    const AdamState& state, const AdamConfig& cfg);

// In-place optimizer used by the training loops. Same update as adam_step.
class Adam {
 public:
  Adam() = default;
  Adam(std::size_t n, AdamConfig cfg);

  // lr_scale multiplies cfg.learning_rate for this step (schedules).
  void step(std::span<double> params, std::span<const double> grads, double lr_scale = 1.0);

  const AdamState& state() const noexcept { return state_; }
  const AdamConfig& config() const noexcept { return cfg_; }
  void reset() { state_ = AdamState::zeros(state_.m.size()); }

 private:
  AdamConfig cfg_{};
  AdamState state_{};
};

}  // namespace hmx::numerics
