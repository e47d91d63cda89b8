#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "hmx/body/robot_model.hpp"
#include "hmx/control/plant.hpp"
#include "hmx/control/rewards.hpp"
#include "hmx/control/rollout.hpp"
#include "hmx/error.hpp"
#include "hmx/retarget/retarget.hpp"

using namespace hmx::control;
using hmx::numerics::UnitQuaternion;

namespace {

// exp(x) by its Taylor series, independent of std::exp.
double taylor_exp(double x) {
  double term = 1.0, sum = 1.0;
  for (int k = 1; k < 60; ++k) {
    term *= x / k;
    sum += term;
  }
  return sum;
}

RobotModel with_dofs(const RobotModel& r, auto&& edit) {
  auto dofs = r.dofs();
  for (auto& d : dofs) edit(d);
  return RobotModel(r.name(), r.links(), dofs, r.keypoint_links(), r.leg_dofs(), r.upper_body_dofs(),
                    r.ankle_roll_dofs(), r.feet());
}

// Default pose, at rest, feet on the ground plane, nothing in contact.
PlantState still_state(const RobotModel& robot) {
  PlantState s;
  s.q = robot.default_pose();
  s.dq.assign(27, 0.0);
  s.last_action = s.q;
  return s;
}

MotionGoal met_goal() {
  MotionGoal g;
  g.q_upper.assign(9, 0.1);
  g.t_upper.assign(18, 0.2);
  g.root_lin_vel = Vec3(0.5, 0.0, 0.0);
  g.roll = 0.05;
  g.pitch = -0.02;
  g.yaw = 1.0;
  return g;
}

}  // namespace

TEST_CASE("pd_torque") {
  const auto robot = hmx::body::default_robot_model();
  const auto gains = PdGains::from_robot(robot);
  PlantState s = still_state(robot);
  s.q[13] = 0.3;
  for (double t : pd_torque(robot, s.q, s, gains)) CHECK(t == 0.0);

  PdGains g = gains;
  g.kp[13] = 50.0;
  g.kd[13] = 2.0;
  std::vector<double> a = s.q;
  a[13] = 0.4;
  s.dq[13] = 0.5;
  CHECK(pd_torque(robot, a, s, g)[13] == doctest::Approx(4.0).epsilon(1e-12));

  // Shoulder torque limit is 40 N*m.
  a[13] = 100.0;
  CHECK(pd_torque(robot, a, s, g)[13] == 40.0);
  a[13] = -100.0;
  CHECK(pd_torque(robot, a, s, g)[13] == -40.0);

  // Ankle-roll targets are replaced by 0.
  a = s.q;
  a[5] = 0.2;
  s.q[5] = 0.1;
  s.dq[13] = 0.0;
  CHECK(pd_torque(robot, a, s, gains)[5] == doctest::Approx(-gains.kp[5] * 0.1));
  CHECK_THROWS_AS(pd_torque(robot, std::vector<double>(26), s, gains), hmx::DimensionError);
}

TEST_CASE("step_plant: rest and constant torque") {
  const auto robot = hmx::body::default_robot_model();
  PlantConfig cfg;
  const PlantState s = make_plant_state(robot, cfg, robot.default_pose(), {});
  const PlantState n = step_plant(robot, cfg, s, std::vector<double>(27, 0.0));
  CHECK(n.q == s.q);
  CHECK(n.dq == s.dq);
  CHECK(n.time == doctest::Approx(0.02));

  const auto free = with_dofs(robot, [](auto& d) { d.damping = 0.0; });
  std::vector<double> tau(27);
  for (std::size_t i = 0; i < 27; ++i) tau[i] = 0.5 * static_cast<double>(i % 5) - 1.0;
  PlantState st = make_plant_state(free, cfg, free.default_pose(), {});
  double worst = 0.0;
  for (int k = 1; k <= 50; ++k) {
    st = step_plant(free, cfg, st, tau);
    for (std::size_t i = 0; i < 27; ++i)
      worst = std::max(worst, std::abs(st.dq[i] - tau[i] * k * cfg.dt / free.dofs()[i].inertia) / k);
  }
  CHECK(worst < 1e-9);

  tau[3] = std::nan("");
  CHECK_THROWS_AS(step_plant(robot, cfg, s, tau), hmx::ValidationError);
}

TEST_CASE("step_pd: critically damped step response does not overshoot") {
  const auto robot = hmx::body::default_robot_model();
  const auto gains = PdGains::from_robot(robot);
  PlantConfig cfg;
  PlantState s = make_plant_state(robot, cfg, robot.default_pose(), {});
  std::vector<double> target(27);
  for (std::size_t i = 0; i < 27; ++i) {
    const auto& d = robot.dofs()[i];
    CHECK(gains.kd[i] >= 2.0 * std::sqrt(gains.kp[i] * d.inertia));
    target[i] = d.min + 0.7 * (d.max - d.min);
  }
  std::vector<double> peak(27, -1e9);
  for (int k = 0; k < 200; ++k) {
    s = step_pd(robot, cfg, gains, s, target);
    for (std::size_t i = 0; i < 27; ++i) peak[i] = std::max(peak[i], s.q[i]);
  }
  for (std::size_t i = 0; i < 27; ++i) {
    if (i == 5 || i == 11) continue;  // ankle roll is held at 0
    CAPTURE(i);
    CHECK(peak[i] <= target[i] + 0.01 * std::abs(target[i]));
    CHECK(s.q[i] == doctest::Approx(target[i]).epsilon(0.02));
  }
}

TEST_CASE("step_plant: feet contact, touchdown and air time") {
  const auto robot = hmx::body::default_robot_model();
  PlantConfig cfg;
  hmx::body::RootState root;
  root.translation = Vec3(0, 0, 0.98);
  PlantState s = make_plant_state(robot, cfg, robot.default_pose(), root);
  CHECK(s.feet_contact[0]);
  CHECK(s.contact_forces[0].z() > 0.0);
  const std::vector<double> hold = robot.default_pose();
  const auto gains = PdGains::from_robot(robot);
  // Lift 10 cm over 0.2 s, hover, then come down.
  for (int k = 0; k < 10; ++k) s = step_pd(robot, cfg, gains, s, hold, {Vec3(0, 0, 0.5), Vec3::Zero()});
  CHECK(!s.feet_contact[0]);
  CHECK(!s.feet_contact[1]);
  CHECK(s.contact_forces[1].norm() == 0.0);
  for (int k = 0; k < 5; ++k) s = step_pd(robot, cfg, gains, s, hold);
  const double airborne = s.feet_air_time[0];
  CHECK(airborne > 0.2);
  bool landed = false;
  for (int k = 0; k < 20 && !landed; ++k) {
    s = step_pd(robot, cfg, gains, s, hold, {Vec3(0, 0, -0.5), Vec3::Zero()});
    landed = s.new_contact[0];
  }
  REQUIRE(landed);
  CHECK(s.landing_air_time[0] > airborne);
  CHECK(s.feet_air_time[0] == 0.0);
  CHECK(s.feet_velocity[0].z() == doctest::Approx(-0.5).epsilon(1e-6));
}

TEST_CASE("imitation rewards: table rows") {
  const MotionGoal g = met_goal();
  RewardBreakdown r = imitation_rewards(g, g);
  CHECK(r.total() == 13.0);
  for (const auto& t : r.terms) CHECK(t.value == 1.0);

  MotionGoal a = g;
  a.q_upper[0] += 0.25;
  a.q_upper[4] -= 0.75;
  r = imitation_rewards(a, g);
  CHECK(std::abs(r.at("dof_position").weighted() - 3.0 * taylor_exp(-0.7)) < 1e-9);
  CHECK(std::abs(r.total() - (3.0 * taylor_exp(-0.7) + 10.0)) < 1e-9);

  a = g;
  a.root_lin_vel.y() += 0.25;
  r = imitation_rewards(a, g);
  CHECK(std::abs(r.at("root_linear_velocity").weighted() - 6.0 * taylor_exp(-1.0)) < 1e-9);
  CHECK(std::abs(r.total() - (6.0 * taylor_exp(-1.0) + 7.0)) < 1e-9);

  a = g;
  a.t_upper[3] += 0.1;
  a.t_upper[17] -= 0.2;
  CHECK(std::abs(imitation_rewards(a, g).at("keypoint_position").weighted() - 2.0 * taylor_exp(-0.3)) < 1e-9);

  a = g;
  a.roll += 0.1;
  a.pitch -= 0.3;
  CHECK(std::abs(imitation_rewards(a, g).at("root_roll_pitch").weighted() - taylor_exp(-0.4)) < 1e-9);

  a = g;
  a.yaw = g.yaw + 0.5;
  CHECK(std::abs(imitation_rewards(a, g).at("root_yaw").weighted() - taylor_exp(-0.5)) < 1e-9);
  // Yaw error wraps: 3.0 vs -3.0 is 2 pi - 6 apart.
  a.yaw = 3.0;
  MotionGoal gy = g;
  gy.yaw = -3.0;
  CHECK(std::abs(imitation_rewards(a, gy).at("root_yaw").value - taylor_exp(-(2.0 * std::numbers::pi - 6.0))) < 1e-9);

  for (const auto& t : imitation_rewards(a, gy).terms) CHECK((t.weighted() > 0.0 && t.weighted() <= t.weight));
  a.q_upper.pop_back();
  CHECK_THROWS_AS(imitation_rewards(a, g), hmx::DimensionError);
  CHECK_THROWS_AS(r.at("nope"), hmx::ValidationError);
}

TEST_CASE("regularization rewards: table rows") {
  const auto robot = hmx::body::default_robot_model();
  PlantConfig cfg;
  const PlantState still = still_state(robot);
  const std::vector<double> a0 = still.q;
  auto eval = [&](const PlantState& s, const PlantState& p, const std::vector<double>& a,
                  const std::vector<double>& pa, const PlantConfig& c) {
    return regularization_rewards(robot, c, {&s, &p, a, pa});
  };
  RewardBreakdown r = eval(still, still, a0, a0, cfg);
  CHECK(r.terms.size() == 14);
  for (const auto& t : r.terms) {
    CAPTURE(t.name);
    CHECK(t.weighted() == 0.0);
  }

  auto one = [&](const PlantState& s, std::string_view name, double expected, const PlantState* prev = nullptr,
                 const std::vector<double>* a = nullptr, const PlantConfig* c = nullptr) {
    const auto rr = eval(s, prev ? *prev : still, a ? *a : a0, a0, c ? *c : cfg);
    CAPTURE(name);
    CHECK(std::abs(rr.at(name).weighted() - expected) < 1e-9);
    // No other row moves.
    for (const auto& t : rr.terms)
      if (t.name != name) CHECK(t.weighted() == 0.0);
  };

  PlantState s = still;
  s.feet_height = {0.3, 0.4};
  one(s, "feet_height", 2.0 * 0.3);

  s = still;
  s.new_contact = {true, false};
  s.landing_air_time = {0.3, 0.0};
  one(s, "time_in_air", 3.0);

  s = still;
  s.new_contact = {false, true};
  s.feet_velocity[1] = Vec3(0.3, 0.0, -0.4);
  one(s, "drag", -0.1 * 0.5);

  s = still;
  s.contact_forces = {Vec3(0, 0, 150.0), Vec3(0, 0, 80.0)};
  one(s, "contact_force", -3e-3 * 50.0);

  s = still;
  s.contact_forces = {Vec3(0, 0, 0), Vec3(30.0, 40.0, 10.0)};
  one(s, "stumble", -2.0);

  s = still;
  PlantState prev = still;
  s.dq[2] = 0.2;
  prev.dq[2] = -0.1;
  s.dq[20] = 0.05;
  r = eval(s, prev, a0, a0, cfg);
  CHECK(std::abs(r.at("dof_acceleration").weighted() - -3e-7 * (15.0 * 15.0 + 2.5 * 2.5)) < 1e-9);

  s = still;
  std::vector<double> a = a0;
  a[3] += 0.5;
  a[17] -= 0.25;
  one(s, "action_rate", -0.1 * 0.75, &still, &a);

  s = still;
  PlantState p2 = still;
  s.dq[13] = 2.0;
  p2.dq[13] = 2.0;
  one(s, "energy", -0.004, &p2);

  s = still;
  PlantConfig wide = cfg;
  wide.collision_radius = 0.25;
  one(s, "collision", -10.0, nullptr, nullptr, &wide);

  s = still;
  s.q[13] = robot.dofs()[13].max + 0.01;
  s.q[16] = robot.dofs()[16].min - 0.01;
  one(s, "dof_limit_violation", -0.2);

  s = still;
  s.q[1] = 0.1;
  s.q[8] = -0.2;
  one(s, "dof_deviation", -10.0 * (0.01 + 0.04));

  s = still;
  s.root_lin_vel = Vec3(0.0, 0.0, 0.5);
  one(s, "vertical_linear_velocity", -0.25);

  s = still;
  s.root_ang_vel = Vec3(0.3, 0.4, 1.0);
  one(s, "horizontal_angular_velocity", -0.4 * 0.25);

  s = still;
  s.root.orientation = UnitQuaternion::from_rpy(0.3, 0.0, 0.7);
  one(s, "projected_gravity", -2.0 * std::sin(0.3) * std::sin(0.3));
}

TEST_CASE("observation layout") {
  const auto robot = hmx::body::default_robot_model();
  PlantState s = still_state(robot);
  s.root.orientation = UnitQuaternion::from_rpy(0.1, -0.2, 3.0);
  s.root_ang_vel = Vec3(1, 2, 3);
  s.dq[0] = 7.0;
  s.last_action[26] = 9.0;
  MotionGoal g = met_goal();
  g.yaw = 3.0;
  auto o = make_observation(s, g);
  CHECK(o.size() == 87);
  CHECK(o[0] == 1.0);
  CHECK(o[3] == doctest::Approx(0.1));
  CHECK(o[4] == doctest::Approx(-0.2));
  CHECK(std::abs(o[5]) < 1e-12);
  CHECK(o[6 + 27] == 7.0);
  CHECK(o[86] == 9.0);
  g.yaw = -3.0;
  o = make_observation(s, g);
  CHECK(o[5] == doctest::Approx(6.0 - 2.0 * std::numbers::pi).epsilon(1e-9));
  CHECK(o[5] == doctest::Approx(-0.2832).epsilon(1e-4));
  CHECK(goal_features(g, s).size() == kGoalFeatureDim);
}

namespace {

// Arms waving, legs still, root gliding forward; keypoints from FK.
hmx::retarget::RobotMotion arm_wave(const RobotModel& robot, std::size_t frames) {
  hmx::retarget::RobotMotion m;
  m.q = hmx::numerics::Matrix(frames, 27);
  for (std::size_t t = 0; t < frames; ++t) {
    const double ph = 2.0 * std::numbers::pi * 0.5 * static_cast<double>(t) / 20.0;
    m.q(t, 13) = 0.4 * std::sin(ph);
    m.q(t, 14) = -1.0 + 0.2 * std::cos(ph);
    m.q(t, 16) = 0.8 + 0.4 * std::sin(ph);
    m.q(t, 20) = -0.4 * std::sin(ph);
    m.q(t, 21) = 1.0 - 0.2 * std::cos(ph);
    m.q(t, 23) = 0.8 - 0.4 * std::sin(ph);
    hmx::body::RootState r;
    r.translation = Vec3(0.5 * static_cast<double>(t) / 20.0, 0.0, 0.95);
    r.orientation = UnitQuaternion::from_yaw(0.1 * static_cast<double>(t) / 20.0);
    m.root.push_back(r);
    const auto fk = hmx::body::fk_robot(robot, m.q.row(t), r);
    m.keypoints.positions.push_back(fk.keypoints);
    m.ik_residual.push_back(0.0);
  }
  return m;
}

}  // namespace

TEST_CASE("rollout: open-loop replay tracks the upper body; deterministic log") {
  const auto robot = hmx::body::default_robot_model();
  const auto motion = arm_wave(robot, 61);
  const auto actions = hmx::retarget::resample_actions(motion.q);
  PlantConfig cfg;
  const auto gains = PdGains::from_robot(robot);
  const PlantState s0 = initial_state(robot, cfg, motion);
  const std::size_t steps = actions.frames() - 1;

  OpenLoopSource src(actions);
  const Trajectory t1 = rollout(robot, cfg, gains, s0, src, motion, steps);
  CHECK(t1.steps.size() == steps);
  MESSAGE("upper-body tracking error " << t1.mean_upper_dof_error() << " rad, imitation " << t1.mean_imitation());
  CHECK(t1.mean_upper_dof_error() < 0.1);
  CHECK(t1.steps.back().state.root.translation.x() == doctest::Approx(1.5).epsilon(1e-9));

  OpenLoopSource src2(actions);
  const Trajectory t2 = rollout(robot, cfg, gains, s0, src2, motion, steps);
  std::ostringstream a, b;
  write_trajectory_jsonl(t1, a);
  write_trajectory_jsonl(t2, b);
  CHECK(a.str() == b.str());
  CHECK(a.str().find("\"schema\":\"hmx-traj/1\"") != std::string::npos);
  std::size_t lines = 0;
  for (char c : a.str()) lines += c == '\n';
  CHECK(lines == steps);

  const Trajectory empty = rollout(robot, cfg, gains, s0, src, motion, 0);
  CHECK(empty.steps.empty());
  std::ostringstream e;
  write_trajectory_jsonl(empty, e);
  CHECK(e.str().empty());

  CHECK_THROWS_AS(rollout(robot, cfg, gains, s0, src, motion, steps + 5), hmx::ValidationError);
}

TEST_CASE("goal sampling holds 20 fps frames at 50 Hz") {
  const auto robot = hmx::body::default_robot_model();
  const auto motion = arm_wave(robot, 10);
  // Steps 0..4 at 0.02 s land on frames 0, 0, 0, 1, 1.
  const std::size_t expect[] = {0, 0, 0, 1, 1, 2};
  for (std::size_t k = 0; k < 6; ++k) {
    const auto g = goal_at(robot, motion, 0.02 * static_cast<double>(k));
    CHECK(g.q_upper[1] == motion.q(expect[k], 13));
  }
  CHECK(goal_at(robot, motion, 100.0).q_upper[1] == motion.q(9, 13));
  const auto g = goal_at(robot, motion, 0.0);
  CHECK(g.root_lin_vel.x() == doctest::Approx(0.5));
  const auto r = root_at(motion, 0.025);
  CHECK(r.translation.x() == doctest::Approx(0.0125));
}
