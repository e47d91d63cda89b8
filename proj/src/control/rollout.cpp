#include "hmx/control/rollout.hpp"

#include <cmath>
#include <ostream>
#include <string>

#include "hmx/error.hpp"
#include "json.hpp"

namespace hmx::control {

namespace {

std::size_t frame_at(const retarget::RobotMotion& motion, double t) {
  const double f = std::floor(t * motion.fps + 1e-9);
  if (f <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(f), motion.frames() - 1);
}

void check_motion(const RobotModel& robot, const retarget::RobotMotion& motion) {
  if (motion.frames() == 0) throw ValidationError("motion has no frames");
  if (motion.q.cols != robot.dof_count()) throw DimensionError("motion q has the wrong DoF count");
  if (motion.root.size() != motion.frames() || motion.keypoints.frames() != motion.frames())
    throw DimensionError("motion root/keypoint frame counts differ from q");
  if (!(motion.fps > 0.0)) throw ValidationError("motion fps must be positive");
}

}  // namespace

MotionGoal goal_at(const RobotModel& robot, const retarget::RobotMotion& motion, double t) {
  check_motion(robot, motion);
  const std::size_t f = frame_at(motion, t);
  MotionGoal g;
  for (int d : robot.upper_body_dofs()) g.q_upper.push_back(motion.q(f, static_cast<std::size_t>(d)));
  for (std::size_t k : body::kUpperBodyKeypoints)
    for (int a = 0; a < 3; ++a) g.t_upper.push_back(motion.keypoints.positions[f][k][a]);
  if (motion.frames() > 1) {
    const std::size_t a = f + 1 < motion.frames() ? f : f - 1;
    g.root_lin_vel = (motion.root[a + 1].translation - motion.root[a].translation) * motion.fps;
  }
  const Vec3 rpy = motion.root[f].orientation.rpy();
  g.roll = rpy.x();
  g.pitch = rpy.y();
  g.yaw = rpy.z();
  return g;
}

RootState root_at(const retarget::RobotMotion& motion, double t) {
  if (motion.root.empty()) throw ValidationError("motion has no root states");
  const double x = std::max(0.0, t * motion.fps);
  const auto f = static_cast<std::size_t>(std::floor(x + 1e-9));
  if (f + 1 >= motion.root.size()) return motion.root.back();
  const double frac = std::max(0.0, x - static_cast<double>(f));
  const RootState& a = motion.root[f];
  const RootState& b = motion.root[f + 1];
  RootState r;
  r.translation = (1.0 - frac) * a.translation + frac * b.translation;
  const Vec3 rel = (b.orientation * a.orientation.conjugate()).to_axis_angle();
  r.orientation = frac == 0.0 ? a.orientation : numerics::UnitQuaternion::from_axis_angle(frac * rel) * a.orientation;
  return r;
}

OpenLoopSource::OpenLoopSource(retarget::ActionSequence actions) : actions_(std::move(actions)) {
  if (actions_.frames() == 0) throw ValidationError("open-loop source: empty action sequence");
}

std::vector<double> OpenLoopSource::act(std::size_t step, const PlantState&, const MotionGoal&) {
  const std::size_t r = std::min(step + 1, actions_.frames() - 1);
  const auto row = actions_.q.row(r);
  return {row.begin(), row.end()};
}

double Trajectory::mean_imitation() const {
  if (steps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& r : steps) s += r.imitation.total();
  return s / static_cast<double>(steps.size());
}

double Trajectory::mean_upper_dof_error() const {
  if (steps.empty()) return 0.0;
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : steps) {
    for (std::size_t i = 0; i < r.goal.q_upper.size(); ++i) {
      s += std::abs(r.goal.q_upper[i] - r.actual.q_upper[i]);
      ++n;
    }
  }
  return n ? s / static_cast<double>(n) : 0.0;
}

PlantState initial_state(const RobotModel& robot, const PlantConfig& cfg, const retarget::RobotMotion& motion) {
  check_motion(robot, motion);
  const auto row = motion.q.row(0);
  return make_plant_state(robot, cfg, row, motion.root[0]);
}

Trajectory rollout(const RobotModel& robot, const PlantConfig& cfg, const PdGains& gains, const PlantState& initial,
                   ActionSource& source, const retarget::RobotMotion& motion, std::size_t steps) {
  cfg.validate();
  Trajectory traj;
  if (steps == 0) return traj;
  check_motion(robot, motion);
  const double horizon = initial.time + static_cast<double>(steps - 1) * cfg.dt;
  if (std::floor(horizon * motion.fps + 1e-9) > static_cast<double>(motion.frames() - 1))
    throw ValidationError("rollout: " + std::to_string(steps) + " steps run past the " +
                          std::to_string(motion.frames()) + "-frame goal motion");
  traj.steps.reserve(steps);
  PlantState state = initial;
  for (std::size_t k = 0; k < steps; ++k) {
    const MotionGoal now = goal_at(robot, motion, state.time);
    std::vector<double> action = source.act(k, state, now);
    if (action.size() != robot.dof_count())
      throw DimensionError("rollout: action source returned " + std::to_string(action.size()) + " values");

    const RootState target = root_at(motion, state.time + cfg.dt);
    RootCommand cmd;
    cmd.lin_vel = (target.translation - state.root.translation) / cfg.dt;
    cmd.ang_vel = (target.orientation * state.root.orientation.conjugate()).to_axis_angle() / cfg.dt;

    StepRecord rec;
    rec.step = k;
    const std::vector<double> prev_action = state.last_action;
    PlantState next = step_pd(robot, cfg, gains, state, action, cmd, &rec.torque);
    rec.time = next.time;
    rec.goal = goal_at(robot, motion, next.time);
    rec.actual = measure(robot, next);
    rec.imitation = imitation_rewards(rec.actual, rec.goal);
    rec.regularization = regularization_rewards(robot, cfg, {&next, &state, action, prev_action});
    rec.action = std::move(action);
    rec.state = next;
    traj.steps.push_back(std::move(rec));
    state = std::move(next);
  }
  return traj;
}

namespace {

nlohmann::json terms_json(const RewardBreakdown& r) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& t : r.terms) j[std::string(t.name)] = t.weighted();
  j["total"] = r.total();
  return j;
}

nlohmann::json vec3(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

}  // namespace

void write_trajectory_jsonl(const Trajectory& traj, std::ostream& out) {
  for (const auto& r : traj.steps) {
    const auto& s = r.state;
    nlohmann::json j;
    j["schema"] = kTrajectorySchema;
    j["step"] = r.step;
    j["time"] = r.time;
    j["q"] = s.q;
    j["dq"] = s.dq;
    j["action"] = r.action;
    j["torque"] = r.torque;
    const auto& o = s.root.orientation;
    j["root"] = {{"translation", vec3(s.root.translation)},
                 {"orientation_wxyz", {o.w(), o.x(), o.y(), o.z()}},
                 {"lin_vel", vec3(s.root_lin_vel)},
                 {"ang_vel", vec3(s.root_ang_vel)}};
    j["feet"] = {{"contact", {s.feet_contact[0], s.feet_contact[1]}},
                 {"height", {s.feet_height[0], s.feet_height[1]}},
                 {"force", {vec3(s.contact_forces[0]), vec3(s.contact_forces[1])}}};
    j["imitation"] = terms_json(r.imitation);
    j["regularization"] = terms_json(r.regularization);
    j["reward"] = r.reward();
    out << j.dump() << '\n';
  }
}

}  // namespace hmx::control
