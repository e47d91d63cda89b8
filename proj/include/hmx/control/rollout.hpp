#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "hmx/control/plant.hpp"
#include "hmx/control/rewards.hpp"
#include "hmx/retarget/motion.hpp"

namespace hmx::control {

inline constexpr std::string_view kTrajectorySchema = "hmx-traj/1";

// Goal at time t: the RobotMotion frame floor(t * fps) (zero-order hold),
// clamped to the last frame. Root velocity is the forward difference of the
// root translation (backward at the last frame).
MotionGoal goal_at(const RobotModel& robot, const retarget::RobotMotion& motion, double t);

// Root pose at time t, linearly interpolated between motion frames.
RootState root_at(const retarget::RobotMotion& motion, double t);

class ActionSource {
 public:
  virtual ~ActionSource() = default;
  // Action for control step `step`, chosen from the current state and goal.
  virtual std::vector<double> act(std::size_t step, const PlantState& state, const MotionGoal& goal) = 0;
};

// Replays an ActionSequence: step k uses row k + 1, the target for the end of
// the control period, clamped to the last row.
class OpenLoopSource final : public ActionSource {
 public:
  explicit OpenLoopSource(retarget::ActionSequence actions);
  std::vector<double> act(std::size_t step, const PlantState& state, const MotionGoal& goal) override;

 private:
  retarget::ActionSequence actions_;
};

struct StepRecord {
  std::size_t step = 0;
  double time = 0.0;  // end of the step
  std::vector<double> action, torque;
  PlantState state;  // after the step
  MotionGoal goal;   // at the end of the step
  MotionGoal actual; // measure(state)
  RewardBreakdown imitation, regularization;

  double reward() const noexcept { return imitation.total() + regularization.total(); }
};

struct Trajectory {
  std::vector<StepRecord> steps;

  double mean_imitation() const;
  // Mean over steps and the 9 upper-body DoFs of |q_tar - q|.
  double mean_upper_dof_error() const;
};

PlantState initial_state(const RobotModel& robot, const PlantConfig& cfg, const retarget::RobotMotion& motion);

// Root follows the motion's root trajectory (scripted); the joints follow the
// source's actions through the PD loop. Throws ValidationError when the
// horizon runs past the last goal frame.
Trajectory rollout(const RobotModel& robot, const PlantConfig& cfg, const PdGains& gains, const PlantState& initial,
                   ActionSource& source, const retarget::RobotMotion& motion, std::size_t steps);

// One JSON object per line, each carrying "schema": "hmx-traj/1".
void write_trajectory_jsonl(const Trajectory& traj, std::ostream& out);

}  // namespace hmx::control
