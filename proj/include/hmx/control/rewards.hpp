#pragma once

#include <array>
#include <span>
#include <string_view>
#include <vector>

#include "hmx/control/plant.hpp"

namespace hmx::control {

// Tracking targets; measure() fills the same layout from a plant state.
struct MotionGoal {
  std::vector<double> q_upper;   // 9 upper-body DoFs, rad
  std::vector<double> t_upper;   // 6 upper-body keypoints x 3, world, m
  Vec3 root_lin_vel = Vec3::Zero();  // world, m/s
  double roll = 0.0, pitch = 0.0, yaw = 0.0;

  // Throws DimensionError unless the sizes are 9 and 18.
  void validate() const;
};

MotionGoal measure(const RobotModel& robot, const PlantState& state);

struct RewardTerm {
  std::string_view name;
  double weight = 0.0;
  double value = 0.0;  // the table expression before weighting
  double weighted() const noexcept { return weight * value; }
};

struct RewardBreakdown {
  std::vector<RewardTerm> terms;
  double total() const noexcept;
  // Throws ValidationError for an unknown name.
  const RewardTerm& at(std::string_view name) const;
};

// Weights 3, 2, 6, 1, 1. Vector differences use the L1 norm except the root
// velocity (Euclidean); angle differences are wrapped.
RewardBreakdown imitation_rewards(const MotionGoal& actual, const MotionGoal& goal);

// Single rows, shared with reduced environments.
double dof_position_reward(std::span<const double> q_tar, std::span<const double> q);

struct RegularizationInputs {
  const PlantState* state = nullptr;
  const PlantState* prev = nullptr;      // one control period earlier
  std::span<const double> action;        // a_t
  std::span<const double> prev_action;   // a_{t-1}
};

// Every row of the regularization table. q'' is (dq - prev.dq) / cfg.dt;
// |h_feet| is the Euclidean norm over both feet.
RewardBreakdown regularization_rewards(const RobotModel& robot, const PlantConfig& cfg,
                                       const RegularizationInputs& in);

// 3 + 3 + 3 x 27 entries.
inline constexpr std::size_t kObservationDim = 87;

// [omega (3, body), roll, pitch, wrap(yaw - goal yaw), q (27), dq (27), a_{t-1} (27)]
std::vector<double> make_observation(const PlantState& state, const MotionGoal& goal);

// Goal layout flattened for network inputs: q_upper (9), t_upper relative to
// the root translation (18), root velocity (3), roll, pitch, yaw error.
inline constexpr std::size_t kGoalFeatureDim = 33;
std::vector<double> goal_features(const MotionGoal& goal, const PlantState& state);

}  // namespace hmx::control
