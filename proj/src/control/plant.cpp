#include "hmx/control/plant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hmx/error.hpp"

namespace hmx::control {

PdGains PdGains::from_robot(const RobotModel& robot) {
  PdGains g;
  for (const auto& d : robot.dofs()) {
    g.kp.push_back(d.kp);
    g.kd.push_back(d.kd);
  }
  return g;
}

void PdGains::validate(std::size_t dof_count) const {
  if (kp.size() != dof_count || kd.size() != dof_count)
    throw DimensionError("pd gains: expected " + std::to_string(dof_count) + " entries");
  for (std::size_t i = 0; i < dof_count; ++i)
    if (!(kp[i] > 0.0) || !(kd[i] > 0.0)) throw ValidationError("pd gains: entry " + std::to_string(i) + " not > 0");
}

void PlantConfig::validate() const {
  if (!(dt > 0.0)) throw ValidationError("plant: dt must be > 0");
  if (substeps < 1) throw ValidationError("plant: substeps must be >= 1");
  if (ground_stiffness < 0.0 || ground_damping < 0.0 || tangential_damping < 0.0)
    throw ValidationError("plant: contact coefficients must be >= 0");
  if (contact_force_threshold < 0.0 || collision_radius < 0.0)
    throw ValidationError("plant: thresholds must be >= 0");
}

std::vector<double> pd_torque(const RobotModel& robot, std::span<const double> action, const PlantState& state,
                              const PdGains& gains) {
  const std::size_t n = robot.dof_count();
  if (action.size() != n || state.q.size() != n || state.dq.size() != n)
    throw DimensionError("pd_torque: expected " + std::to_string(n) + "-DoF action and state");
  std::vector<double> target(action.begin(), action.end());
  for (int d : robot.ankle_roll_dofs()) target[static_cast<std::size_t>(d)] = 0.0;
  std::vector<double> tau(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lim = robot.dofs()[i].torque_limit;
    tau[i] = std::clamp(gains.kp[i] * (target[i] - state.q[i]) - gains.kd[i] * state.dq[i], -lim, lim);
  }
  return tau;
}

namespace {

struct Feet {
  std::array<Vec3, 2> pos;
};

Feet feet_of(const RobotModel& robot, const PlantState& s) {
  const auto fk = body::fk_robot(robot, s.q, s.root, body::LimitMode::Unchecked);
  return {body::foot_positions(robot, fk)};
}

void update_contacts(const PlantConfig& cfg, PlantState& s, const Feet& f, const std::array<Vec3, 2>& vel) {
  for (std::size_t i = 0; i < 2; ++i) {
    s.feet_height[i] = f.pos[i].z();
    s.feet_velocity[i] = vel[i];
    const double pen = -f.pos[i].z();
    if (pen > 0.0) {
      const double fz = cfg.ground_stiffness * pen + cfg.ground_damping * std::max(0.0, -vel[i].z());
      s.contact_forces[i] = Vec3(-cfg.tangential_damping * vel[i].x(), -cfg.tangential_damping * vel[i].y(), fz);
      s.feet_contact[i] = true;
    } else {
      s.contact_forces[i] = Vec3::Zero();
      s.feet_contact[i] = false;
    }
  }
}

body::UnitQuaternion integrate_orientation(const body::UnitQuaternion& q, const Vec3& w, double h) {
  if (w.squaredNorm() == 0.0) return q;
  return body::UnitQuaternion::from_axis_angle(w * h) * q;
}

template <class TorqueFn>
PlantState advance(const RobotModel& robot, const PlantConfig& cfg, const PlantState& state, const RootCommand& root,
                   TorqueFn&& torque, std::vector<double>* applied) {
  cfg.validate();
  const std::size_t n = robot.dof_count();
  if (state.q.size() != n || state.dq.size() != n) throw DimensionError("step_plant: state has wrong DoF count");
  PlantState s = state;
  s.new_contact = {false, false};
  s.landing_air_time = {0.0, 0.0};
  const double h = cfg.dt / static_cast<double>(cfg.substeps);
  Feet prev = feet_of(robot, s);
  if (applied) applied->assign(n, 0.0);
  for (std::size_t k = 0; k < cfg.substeps; ++k) {
    const std::vector<double> tau = torque(s);
    for (double t : tau)
      if (!std::isfinite(t)) throw ValidationError("step_plant: non-finite torque");
    for (std::size_t i = 0; i < n; ++i) {
      const auto& d = robot.dofs()[i];
      s.dq[i] += h * (tau[i] - d.damping * s.dq[i]) / d.inertia;
      s.q[i] += h * s.dq[i];
      if (applied) (*applied)[i] += tau[i] / static_cast<double>(cfg.substeps);
    }
    s.root.translation += h * root.lin_vel;
    s.root.orientation = integrate_orientation(s.root.orientation, root.ang_vel, h);
    const Feet now = feet_of(robot, s);
    const std::array<bool, 2> was = s.feet_contact;
    update_contacts(cfg, s, now, {(now.pos[0] - prev.pos[0]) / h, (now.pos[1] - prev.pos[1]) / h});
    for (std::size_t i = 0; i < 2; ++i) {
      if (s.feet_contact[i]) {
        if (!was[i]) {
          s.new_contact[i] = true;
          s.landing_air_time[i] = s.feet_air_time[i];
        }
        s.feet_air_time[i] = 0.0;
      } else {
        s.feet_air_time[i] += h;
      }
    }
    prev = now;
  }
  s.root_lin_vel = root.lin_vel;
  s.root_ang_vel = s.root.orientation.to_matrix().transpose() * root.ang_vel;
  s.time = state.time + cfg.dt;
  return s;
}

}  // namespace

PlantState make_plant_state(const RobotModel& robot, const PlantConfig& cfg, std::span<const double> q,
                            const RootState& root) {
  if (q.size() != robot.dof_count()) throw DimensionError("plant state: wrong DoF count");
  PlantState s;
  s.q.assign(q.begin(), q.end());
  s.dq.assign(q.size(), 0.0);
  s.root = root;
  s.last_action = s.q;
  update_contacts(cfg, s, feet_of(robot, s), {Vec3::Zero(), Vec3::Zero()});
  return s;
}

PlantState step_plant(const RobotModel& robot, const PlantConfig& cfg, const PlantState& state,
                      std::span<const double> tau, const RootCommand& root) {
  if (tau.size() != robot.dof_count()) throw DimensionError("step_plant: wrong torque count");
  const std::vector<double> t(tau.begin(), tau.end());
  return advance(robot, cfg, state, root, [&](const PlantState&) { return t; }, nullptr);
}

PlantState step_pd(const RobotModel& robot, const PlantConfig& cfg, const PdGains& gains, const PlantState& state,
                   std::span<const double> action, const RootCommand& root, std::vector<double>* applied_tau) {
  gains.validate(robot.dof_count());
  if (action.size() != robot.dof_count()) throw DimensionError("step_pd: wrong action count");
  for (double a : action)
    if (!std::isfinite(a)) throw ValidationError("step_pd: non-finite action");
  PlantState next = advance(
      robot, cfg, state, root, [&](const PlantState& s) { return pd_torque(robot, action, s, gains); }, applied_tau);
  next.last_action.assign(action.begin(), action.end());
  return next;
}

bool in_collision(const RobotModel& robot, const PlantConfig& cfg, const PlantState& state) {
  const auto fk = body::fk_robot(robot, state.q, state.root, body::LimitMode::Unchecked);
  const double r2 = cfg.collision_radius * cfg.collision_radius;
  for (std::size_t a = 0; a < fk.keypoints.size(); ++a)
    for (std::size_t b = a + 1; b < fk.keypoints.size(); ++b)
      if ((fk.keypoints[a] - fk.keypoints[b]).squaredNorm() < r2) return true;
  return false;
}

}  // namespace hmx::control
