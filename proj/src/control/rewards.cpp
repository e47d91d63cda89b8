#include "hmx/control/rewards.hpp"

#include <cmath>
#include <string>

#include "hmx/error.hpp"

namespace hmx::control {

using numerics::wrap_angle;

void MotionGoal::validate() const {
  if (q_upper.size() != 9) throw DimensionError("motion goal: q_upper needs 9 entries, got " + std::to_string(q_upper.size()));
  if (t_upper.size() != 18)
    throw DimensionError("motion goal: t_upper needs 18 entries, got " + std::to_string(t_upper.size()));
}

MotionGoal measure(const RobotModel& robot, const PlantState& state) {
  MotionGoal m;
  for (int d : robot.upper_body_dofs()) m.q_upper.push_back(state.q[static_cast<std::size_t>(d)]);
  const auto fk = body::fk_robot(robot, state.q, state.root, body::LimitMode::Unchecked);
  for (std::size_t k : body::kUpperBodyKeypoints)
    for (int a = 0; a < 3; ++a) m.t_upper.push_back(fk.keypoints[k][a]);
  m.root_lin_vel = state.root_lin_vel;
  const Vec3 rpy = state.root.orientation.rpy();
  m.roll = rpy.x();
  m.pitch = rpy.y();
  m.yaw = rpy.z();
  return m;
}

double RewardBreakdown::total() const noexcept {
  double s = 0.0;
  for (const auto& t : terms) s += t.weighted();
  return s;
}

const RewardTerm& RewardBreakdown::at(std::string_view name) const {
  for (const auto& t : terms)
    if (t.name == name) return t;
  throw ValidationError("reward term '" + std::string(name) + "' not found");
}

namespace {

double l1(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

double sq(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

}  // namespace

double dof_position_reward(std::span<const double> q_tar, std::span<const double> q) {
  if (q_tar.size() != q.size()) throw DimensionError("dof position reward: size mismatch");
  return std::exp(-0.7 * l1(q_tar, q));
}

RewardBreakdown imitation_rewards(const MotionGoal& actual, const MotionGoal& goal) {
  actual.validate();
  goal.validate();
  RewardBreakdown r;
  r.terms.push_back({"dof_position", 3.0, dof_position_reward(goal.q_upper, actual.q_upper)});
  r.terms.push_back({"keypoint_position", 2.0, std::exp(-l1(goal.t_upper, actual.t_upper))});
  r.terms.push_back({"root_linear_velocity", 6.0, std::exp(-4.0 * (goal.root_lin_vel - actual.root_lin_vel).norm())});
  r.terms.push_back({"root_roll_pitch", 1.0,
                     std::exp(-(std::abs(wrap_angle(goal.roll - actual.roll)) +
                                std::abs(wrap_angle(goal.pitch - actual.pitch))))});
  r.terms.push_back({"root_yaw", 1.0, std::exp(-std::abs(wrap_angle(actual.yaw - goal.yaw)))});
  return r;
}

RewardBreakdown regularization_rewards(const RobotModel& robot, const PlantConfig& cfg,
                                       const RegularizationInputs& in) {
  if (!in.state || !in.prev) throw ValidationError("regularization rewards: state and previous state are required");
  const PlantState& s = *in.state;
  const PlantState& p = *in.prev;
  const std::size_t n = robot.dof_count();
  if (s.q.size() != n || s.dq.size() != n || p.dq.size() != n || in.action.size() != n || in.prev_action.size() != n)
    throw DimensionError("regularization rewards: expected " + std::to_string(n) + "-DoF inputs");

  RewardBreakdown r;
  const double h_norm = std::hypot(s.feet_height[0], s.feet_height[1]);
  r.terms.push_back({"feet_height", 2.0, std::max(h_norm - 0.2, 0.0)});

  double air = 0.0, drag = 0.0, force = 0.0;
  bool stumble = false;
  for (std::size_t i = 0; i < 2; ++i) {
    if (s.new_contact[i]) {
      air += s.landing_air_time[i];
      drag += s.feet_velocity[i].norm();
    }
    const Vec3& f = s.contact_forces[i];
    const double fz = std::abs(f.z());
    if (fz >= cfg.contact_force_threshold) force += fz - cfg.contact_force_threshold;
    if (std::hypot(f.x(), f.y()) > 4.0 * fz) stumble = true;
  }
  r.terms.push_back({"time_in_air", 10.0, air});
  r.terms.push_back({"drag", -0.1, drag});
  r.terms.push_back({"contact_force", -3e-3, force});
  r.terms.push_back({"stumble", -2.0, stumble ? 1.0 : 0.0});

  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = (s.dq[i] - p.dq[i]) / cfg.dt;
    acc += a * a;
  }
  r.terms.push_back({"dof_acceleration", -3e-7, acc});
  r.terms.push_back({"action_rate", -0.1, l1(in.prev_action, in.action)});
  r.terms.push_back({"energy", -1e-3, sq(s.dq)});
  r.terms.push_back({"collision", -10.0, in_collision(robot, cfg, s) ? 1.0 : 0.0});

  double violations = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    if (s.q[i] > robot.dofs()[i].max || s.q[i] < robot.dofs()[i].min) violations += 1.0;
  r.terms.push_back({"dof_limit_violation", -0.1, violations});

  double dev = 0.0;
  for (int d : robot.leg_dofs()) {
    const auto i = static_cast<std::size_t>(d);
    dev += (robot.dofs()[i].default_q - s.q[i]) * (robot.dofs()[i].default_q - s.q[i]);
  }
  r.terms.push_back({"dof_deviation", -10.0, dev});
  r.terms.push_back({"vertical_linear_velocity", -1.0, s.root_lin_vel.z() * s.root_lin_vel.z()});
  r.terms.push_back({"horizontal_angular_velocity", -0.4,
                     s.root_ang_vel.x() * s.root_ang_vel.x() + s.root_ang_vel.y() * s.root_ang_vel.y()});
  const Vec3 g = s.root.orientation.to_matrix().transpose() * Vec3(0.0, 0.0, -1.0);
  r.terms.push_back({"projected_gravity", -2.0, g.x() * g.x() + g.y() * g.y()});
  return r;
}

std::vector<double> make_observation(const PlantState& state, const MotionGoal& goal) {
  std::vector<double> o;
  o.reserve(kObservationDim);
  for (int a = 0; a < 3; ++a) o.push_back(state.root_ang_vel[a]);
  const Vec3 rpy = state.root.orientation.rpy();
  o.push_back(wrap_angle(rpy.x()));
  o.push_back(wrap_angle(rpy.y()));
  o.push_back(wrap_angle(rpy.z() - goal.yaw));
  o.insert(o.end(), state.q.begin(), state.q.end());
  o.insert(o.end(), state.dq.begin(), state.dq.end());
  o.insert(o.end(), state.last_action.begin(), state.last_action.end());
  if (o.size() != kObservationDim)
    throw DimensionError("observation: expected " + std::to_string(kObservationDim) + " entries, got " + std::to_string(o.size()));
  return o;
}

std::vector<double> goal_features(const MotionGoal& goal, const PlantState& state) {
  goal.validate();
  std::vector<double> g(goal.q_upper.begin(), goal.q_upper.end());
  for (std::size_t i = 0; i < 18; ++i) g.push_back(goal.t_upper[i] - state.root.translation[static_cast<int>(i % 3)]);
  for (int a = 0; a < 3; ++a) g.push_back(goal.root_lin_vel[a]);
  const Vec3 rpy = state.root.orientation.rpy();
  g.push_back(wrap_angle(goal.roll - rpy.x()));
  g.push_back(wrap_angle(goal.pitch - rpy.y()));
  g.push_back(wrap_angle(goal.yaw - rpy.z()));
  return g;
}

}  // namespace hmx::control
