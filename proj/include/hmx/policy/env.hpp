#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "hmx/control/rollout.hpp"
#include "hmx/policy/policy.hpp"

namespace hmx::policy {

struct EnvStep {
  std::vector<double> input;  // next network input (raw, before normalization)
  double reward = 0.0;        // training reward
  double imitation = 0.0;     // imitation part, logged in the learning curve
  bool done = false;          // episode ended; the caller resets
};

class Env {
 public:
  virtual ~Env() = default;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t action_dim() const = 0;
  virtual std::vector<double> reset(numerics::Prng& rng) = 0;
  virtual EnvStep step(std::span<const double> action) = 0;
  virtual std::unique_ptr<Env> clone() const = 0;
};

// Two independent PD-driven joints tracking q_tar(t) = A sin(2 pi f t + phi).
// Reward is the DoF-position imitation row, 3 exp(-0.7 |q_tar - q|_1).
struct ReducedEnvConfig {
  std::array<double, 2> amplitude{0.8, 0.6};
  std::array<double, 2> phase{0.0, 1.5707963267948966};
  double frequency = 0.5;  // Hz
  double dt = 0.02;
  std::size_t substeps = 4;
  std::size_t horizon = 100;
  double inertia = 0.01, damping = 0.05, kp = 100.0, kd = 2.0, torque_limit = 40.0;
  double q_limit = 1.5;

  void validate() const;
};

class ReducedEnv final : public Env {
 public:
  explicit ReducedEnv(ReducedEnvConfig cfg = {});

  static constexpr std::size_t kInputDim = 10;  // q, dq, a_{t-1}, q_tar(t+dt), dq_tar(t+dt)
  std::size_t input_dim() const override { return kInputDim; }
  std::size_t action_dim() const override { return 2; }
  std::vector<double> reset(numerics::Prng& rng) override;
  EnvStep step(std::span<const double> action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<ReducedEnv>(*this); }

  std::array<double, 2> target(double t) const;
  const std::array<double, 2>& q() const noexcept { return q_; }

 private:
  std::vector<double> input() const;

  ReducedEnvConfig cfg_;
  std::array<double, 2> q_{}, dq_{}, last_{};
  double t0_ = 0.0;  // start offset, s
  std::size_t k_ = 0;
};

struct TrackingEnvConfig {
  std::size_t horizon = 100;   // control steps per episode
  double limit_margin = 0.2;   // rad past a joint limit that ends the episode

  void validate() const;
};

// Full plant tracking RobotMotion goals: input is observation (87) followed by
// goal features (33); reward is imitation + regularization totals.
class TrackingEnv final : public Env {
 public:
  TrackingEnv(std::shared_ptr<const body::RobotModel> robot, control::PlantConfig plant, control::PdGains gains,
              std::shared_ptr<const std::vector<retarget::RobotMotion>> motions, TrackingEnvConfig cfg = {});

  static constexpr std::size_t kInputDim = control::kObservationDim + control::kGoalFeatureDim;
  std::size_t input_dim() const override { return kInputDim; }
  std::size_t action_dim() const override { return robot_->dof_count(); }
  std::vector<double> reset(numerics::Prng& rng) override;
  EnvStep step(std::span<const double> action) override;
  std::unique_ptr<Env> clone() const override { return std::make_unique<TrackingEnv>(*this); }

  const control::PlantState& state() const noexcept { return state_; }

 private:
  std::vector<double> input() const;

  std::shared_ptr<const body::RobotModel> robot_;
  control::PlantConfig plant_;
  control::PdGains gains_;
  std::shared_ptr<const std::vector<retarget::RobotMotion>> motions_;
  TrackingEnvConfig cfg_;
  std::size_t motion_ = 0, k_ = 0, steps_ = 0;
  control::PlantState state_;
};

// Network input for a tracking policy, shared by TrackingEnv and PolicySource.
std::vector<double> tracking_input(const control::PlantState& state, const control::MotionGoal& goal);

// Deterministic (mean) actions from a trained tracking policy.
class PolicySource final : public control::ActionSource {
 public:
  explicit PolicySource(const PolicyNet& net);
  std::vector<double> act(std::size_t step, const control::PlantState& state, const control::MotionGoal& goal) override;

 private:
  const PolicyNet* net_;
};

struct CurvePoint {
  std::size_t iteration = 0;  // 1-based
  double mean_imitation = 0.0;  // per-step imitation reward over the iteration's samples
  double mean_reward = 0.0;     // per-step raw training reward
  std::size_t episodes_done = 0;
  PpoLoss loss;
};

struct TrainResult {
  PolicyNet net;
  std::vector<CurvePoint> curve;
};

// A pure function of (env prototype, configs, seed, iterations).
TrainResult train_policy(const Env& prototype, const PpoConfig& cfg, std::vector<std::size_t> hidden, std::uint64_t seed,
                         std::size_t iterations);

void write_learning_curve_csv(std::span<const CurvePoint> curve, std::ostream& out);

}  // namespace hmx::policy
