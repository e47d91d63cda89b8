#include "hmx/numerics/adam.hpp"

#include <cmath>
#include <string>

#include "hmx/error.hpp"

namespace hmx::numerics {
namespace {

void update(std::span<double> params, std::span<const double> grads, AdamState& st,
            const AdamConfig& cfg, double lr) {
  if (params.size() != grads.size() || st.m.size() != params.size() || st.v.size() != params.size()) {
    throw DimensionError("adam: params/grads/state length mismatch (" + std::to_string(params.size()) +
                         ", " + std::to_string(grads.size()) + ", " + std::to_string(st.m.size()) + ")");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NumericError("adam: non-finite gradient at index " + std::to_string(i));
    }
  }
  st.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    st.m[i] = cfg.beta1 * st.m[i] + (1.0 - cfg.beta1) * g;
    st.v[i] = cfg.beta2 * st.v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = st.m[i] / bc1;
    const double v_hat = st.v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

}  // namespace

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0) || !(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0)) {
    throw ValidationError("adam: invalid config (lr > 0, beta1/beta2 in (0,1), epsilon > 0 required)");
  }
}

std::pair<std::vector<double>, AdamState> adam_step(std::span<const double> params,
                                                    std::span<const double> grads,
                                                    const AdamState& state, const AdamConfig& cfg) {
  cfg.validate();
  std::vector<double> out(params.begin(), params.end());
  AdamState st = state;
  update(out, grads, st, cfg, cfg.learning_rate);
  return {std::move(out), std::move(st)};
}

Adam::Adam(std::size_t n, AdamConfig cfg) : cfg_(cfg), state_(AdamState::zeros(n)) { cfg_.validate(); }

void Adam::step(std::span<double> params, std::span<const double> grads, double lr_scale) {
  update(params, grads, state_, cfg_, cfg_.learning_rate * lr_scale);
}

}  // namespace hmx::numerics
