#pragma once

#include <optional>
#include <string>
#include <utility>
#include <span>
#include <vector>

#include "hmx/numerics/adam.hpp"
#include "hmx/retarget/motion.hpp"

namespace hmx::retarget {

struct ShapeFitConfig {
  numerics::AdamConfig adam{0.05};
  int max_iters = 3000;
  // Learning rate decays on a cosine schedule down to lr * final_lr_scale.
  double final_lr_scale = 1e-4;
  // Converged when the best loss improved by less than tol over the last
  // 200 iterations.
  double convergence_tol = 1e-9;
  // Clamp margin: beta stays inside [-(5 - margin), 5 - margin].
  double bound_margin = 1e-6;
};

struct ShapeFitResult {
  std::vector<double> beta_opt;
  double final_loss = 0.0;  // meters, Frobenius norm of the 12x3 residual
  int iterations = 0;
  bool converged = false;
};

// Adam on ||P_T(beta) - P_T_robot||_2 with the human held in its T-pose (theta
// = 0, root at the origin). beta is clamped into the open bound after every
// step; the best iterate is returned.
ShapeFitResult fit_shape(const body::HumanBodyModel& human, std::span<const Vec3> robot_tpose_keypoints,
                         const ShapeFitConfig& cfg = {});

// T-pose keypoints of the robot (default pose, identity root at the origin).
std::vector<Vec3> robot_tpose_keypoints(const body::RobotModel& robot);

// Per-frame human keypoints with beta replaced by beta_opt.
KeypointSequence extract_keypoints(const body::HumanBodyModel& human, const HumanPoseSequence& pose,
                                   std::span<const double> beta_opt);

// Root translation follows t_root; heading is the yaw of the horizontal root
// velocity, holding the previous heading while speed < 0.05 m/s.
std::vector<RootState> estimate_root_states(std::span<const Vec3> t_root, double fps);
inline constexpr double kHeadingMinSpeed = 0.05;

struct IkConfig {
  double lambda_smooth = 0.05;
  int max_iters = 800;
  numerics::AdamConfig adam{0.03};
  double final_lr_scale = 1e-3;
  // Stops early when the window-mean loss over 50 iterations improves by
  // less than tol relative.
  double convergence_tol = 1e-7;
  // Cold start is the default pose with these DoFs overridden. A straight
  // elbow is a singular start: forearm twist has zero gradient there.
  std::vector<std::pair<std::string, double>> cold_start = {{"left_elbow", 0.6}, {"right_elbow", 0.6}};

  void validate() const;
};

struct IkResult {
  Matrix q;                          // frames x 27
  std::vector<double> residuals;     // per frame mean keypoint distance (m)
  std::vector<double> loss_history;  // L_ik per iteration
  double final_loss = 0.0;
  int iterations = 0;
};

// Retargeting loss terms for a trajectory.
struct IkLoss {
  double retarget = 0.0;  // sum over frames, keypoints, coordinates of |FK - P|
  double smooth = 0.0;    // sum over interior frames and DoFs of |2q[i] - q[i-1] - q[i+1]|
  double total(double lambda) const noexcept { return retarget + lambda * smooth; }
};

IkLoss ik_loss(const KeypointSequence& keypoints, const body::RobotModel& robot, std::span<const RootState> roots,
               const Matrix& q);
double smoothing_loss(const Matrix& q);

// Joint optimization of the whole trajectory with Adam and analytic
// Jacobians. DoFs outside robot.ik_active() stay at their default value; q is
// clamped into the limits after every step. `init` warm-starts the solve;
// otherwise every frame starts from the cold-start pose.
IkResult solve_ik(const KeypointSequence& keypoints, const body::RobotModel& robot, const IkConfig& cfg,
                  std::span<const RootState> roots, const std::optional<Matrix>& init = std::nullopt);

struct RetargetConfig {
  ShapeFitConfig shape;
  IkConfig ik;
};

struct RetargetResult {
  RobotMotion motion;
  ShapeFitResult shape;
  IkLoss loss;
};

// fit_shape -> extract_keypoints -> solve_ik, with roots from estimate_root_states.
RetargetResult retarget_sequence(const body::HumanBodyModel& human, const HumanPoseSequence& pose,
                                 const body::RobotModel& robot, const RetargetConfig& cfg = {});

// Linear interpolation from the 20 fps pose grid onto a 50 fps grid covering
// the same duration: floor(duration * 50) + 1 frames, no extrapolation.
ActionSequence resample_actions(const Matrix& q20);

// Synthetic walking clip used by the bundled samples and tests: forward walk
// with leg swing, knee flexion and counter-swinging lowered arms.
HumanPoseSequence synthetic_walk(const body::HumanBodyModel& human, std::size_t frames, double speed,
                                 double turn_rate, std::uint64_t seed);

}  // namespace hmx::retarget
