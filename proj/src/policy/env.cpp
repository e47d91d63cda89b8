#include "hmx/policy/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "hmx/error.hpp"

namespace hmx::policy {

void ReducedEnvConfig::validate() const {
  if (!(frequency > 0.0) || !(dt > 0.0) || substeps == 0 || horizon == 0)
    throw ValidationError("reduced env: frequency, dt, substeps and horizon must be positive");
  if (!(inertia > 0.0) || damping < 0.0 || kp < 0.0 || kd < 0.0 || !(torque_limit > 0.0) || !(q_limit > 0.0))
    throw ValidationError("reduced env: invalid joint parameters");
}

ReducedEnv::ReducedEnv(ReducedEnvConfig cfg) : cfg_(cfg) { cfg_.validate(); }

std::array<double, 2> ReducedEnv::target(double t) const {
  const double w = 2.0 * std::numbers::pi * cfg_.frequency;
  return {cfg_.amplitude[0] * std::sin(w * t + cfg_.phase[0]), cfg_.amplitude[1] * std::sin(w * t + cfg_.phase[1])};
}

std::vector<double> ReducedEnv::input() const {
  const double t = t0_ + static_cast<double>(k_ + 1) * cfg_.dt;
  const double w = 2.0 * std::numbers::pi * cfg_.frequency;
  const auto qt = target(t);
  std::vector<double> x{q_[0], q_[1], dq_[0], dq_[1], last_[0], last_[1], qt[0], qt[1]};
  for (int j = 0; j < 2; ++j) x.push_back(cfg_.amplitude[j] * w * std::cos(w * t + cfg_.phase[j]));
  return x;
}

std::vector<double> ReducedEnv::reset(numerics::Prng& rng) {
  t0_ = rng.uniform() / cfg_.frequency;
  k_ = 0;
  q_ = target(t0_);
  const double w = 2.0 * std::numbers::pi * cfg_.frequency;
  for (int j = 0; j < 2; ++j) dq_[j] = cfg_.amplitude[j] * w * std::cos(w * t0_ + cfg_.phase[j]);
  last_ = q_;
  return input();
}

EnvStep ReducedEnv::step(std::span<const double> action) {
  if (action.size() != 2) throw DimensionError("reduced env: expected 2 actions");
  std::array<double, 2> a{};
  for (int j = 0; j < 2; ++j) {
    if (!std::isfinite(action[j])) throw NumericError("reduced env: non-finite action");
    a[j] = std::clamp(action[j], -cfg_.q_limit, cfg_.q_limit);
  }
  const double h = cfg_.dt / static_cast<double>(cfg_.substeps);
  for (std::size_t s = 0; s < cfg_.substeps; ++s) {
    for (int j = 0; j < 2; ++j) {
      const double tau = std::clamp(cfg_.kp * (a[j] - q_[j]) - cfg_.kd * dq_[j], -cfg_.torque_limit, cfg_.torque_limit);
      dq_[j] += h * (tau - cfg_.damping * dq_[j]) / cfg_.inertia;
      q_[j] += h * dq_[j];
      if (std::abs(q_[j]) > cfg_.q_limit) {
        q_[j] = std::copysign(cfg_.q_limit, q_[j]);
        dq_[j] = 0.0;
      }
    }
  }
  last_ = a;
  ++k_;
  const auto qt = target(t0_ + static_cast<double>(k_) * cfg_.dt);
  EnvStep out;
  out.imitation = 3.0 * control::dof_position_reward(qt, q_);
  out.reward = out.imitation;
  out.done = k_ >= cfg_.horizon;
  out.input = input();
  return out;
}

void TrackingEnvConfig::validate() const {
  if (horizon == 0) throw ValidationError("tracking env: horizon must be positive");
  if (!(limit_margin >= 0.0)) throw ValidationError("tracking env: limit_margin must be >= 0");
}

TrackingEnv::TrackingEnv(std::shared_ptr<const body::RobotModel> robot, control::PlantConfig plant,
                         control::PdGains gains, std::shared_ptr<const std::vector<retarget::RobotMotion>> motions,
                         TrackingEnvConfig cfg)
    : robot_(std::move(robot)), plant_(plant), gains_(std::move(gains)), motions_(std::move(motions)), cfg_(cfg) {
  if (!robot_) throw ValidationError("tracking env: no robot model");
  if (!motions_ || motions_->empty()) throw ValidationError("tracking env: motion set is empty");
  plant_.validate();
  gains_.validate(robot_->dof_count());
  cfg_.validate();
  for (const auto& m : *motions_) {
    if (m.frames() < 2) throw ValidationError("tracking env: every motion needs at least 2 frames");
    if (m.q.cols != robot_->dof_count()) throw DimensionError("tracking env: motion DoF count differs from the robot");
  }
}

std::vector<double> tracking_input(const control::PlantState& state, const control::MotionGoal& goal) {
  std::vector<double> x = control::make_observation(state, goal);
  const auto g = control::goal_features(goal, state);
  x.insert(x.end(), g.begin(), g.end());
  return x;
}

std::vector<double> TrackingEnv::input() const {
  return tracking_input(state_, control::goal_at(*robot_, (*motions_)[motion_], state_.time));
}

std::vector<double> TrackingEnv::reset(numerics::Prng& rng) {
  motion_ = static_cast<std::size_t>(rng.below(motions_->size()));
  const auto& m = (*motions_)[motion_];
  const double length = static_cast<double>(m.frames() - 1) / m.fps;
  // Whole control steps that keep every goal lookup inside the motion.
  const auto available = static_cast<std::size_t>(std::floor(length / plant_.dt + 1e-9));
  steps_ = std::max<std::size_t>(1, std::min(cfg_.horizon, available));
  const std::size_t slack = available > steps_ ? available - steps_ : 0;
  const std::size_t start = slack ? static_cast<std::size_t>(rng.below(slack + 1)) : 0;
  const double t0 = static_cast<double>(start) * plant_.dt;
  const std::size_t frame = std::min(static_cast<std::size_t>(std::floor(t0 * m.fps + 1e-9)), m.frames() - 1);
  const auto row = m.q.row(frame);
  state_ = control::make_plant_state(*robot_, plant_, row, control::root_at(m, t0));
  state_.time = t0;
  k_ = 0;
  return input();
}

EnvStep TrackingEnv::step(std::span<const double> action) {
  const auto& m = (*motions_)[motion_];
  if (action.size() != robot_->dof_count()) throw DimensionError("tracking env: wrong action count");
  std::vector<double> a(action.begin(), action.end());
  for (double v : a)
    if (!std::isfinite(v)) throw NumericError("tracking env: non-finite action");
  robot_->clamp_to_limits(a);

  const body::RootState target = control::root_at(m, state_.time + plant_.dt);
  control::RootCommand cmd;
  cmd.lin_vel = (target.translation - state_.root.translation) / plant_.dt;
  cmd.ang_vel = (target.orientation * state_.root.orientation.conjugate()).to_axis_angle() / plant_.dt;

  const std::vector<double> prev_action = state_.last_action;
  control::PlantState next = control::step_pd(*robot_, plant_, gains_, state_, a, cmd);
  const control::MotionGoal goal = control::goal_at(*robot_, m, next.time);
  const auto imitation = control::imitation_rewards(control::measure(*robot_, next), goal);
  const auto reg = control::regularization_rewards(*robot_, plant_, {&next, &state_, a, prev_action});
  state_ = std::move(next);
  ++k_;

  EnvStep out;
  out.imitation = imitation.total();
  out.reward = out.imitation + reg.total();
  bool beyond = false;
  const auto& dofs = robot_->dofs();
  for (std::size_t d = 0; d < dofs.size(); ++d)
    if (state_.q[d] < dofs[d].min - cfg_.limit_margin || state_.q[d] > dofs[d].max + cfg_.limit_margin) beyond = true;
  out.done = k_ >= steps_ || beyond;
  out.input = input();
  return out;
}

PolicySource::PolicySource(const PolicyNet& net) : net_(&net) {
  if (net.config().input_dim != TrackingEnv::kInputDim)
    throw DimensionError("policy source: policy input dim " + std::to_string(net.config().input_dim) +
                         " does not match the tracking input " + std::to_string(TrackingEnv::kInputDim));
}

std::vector<double> PolicySource::act(std::size_t, const control::PlantState& state, const control::MotionGoal& goal) {
  return net_->act_mean(tracking_input(state, goal));
}

TrainResult train_policy(const Env& prototype, const PpoConfig& cfg, std::vector<std::size_t> hidden, std::uint64_t seed,
                         std::size_t iterations) {
  cfg.validate();
  PolicyNetConfig ncfg;
  ncfg.input_dim = prototype.input_dim();
  ncfg.action_dim = prototype.action_dim();
  ncfg.hidden = std::move(hidden);
  TrainResult res{PolicyNet::random_init(ncfg, seed), {}};
  if (iterations == 0) return res;
  PolicyNet& net = res.net;

  const numerics::Prng root(seed);
  numerics::Prng act_rng = root.split("actions");
  numerics::Prng update_rng = root.split("minibatches");
  numerics::Adam opt(net.params().size(), numerics::AdamConfig{cfg.learning_rate});

  const std::size_t E = cfg.num_envs, T = cfg.rollout_len, in = ncfg.input_dim, na = ncfg.action_dim;
  std::vector<std::unique_ptr<Env>> envs;
  std::vector<numerics::Prng> env_rng;
  std::vector<std::vector<double>> obs(E);
  for (std::size_t e = 0; e < E; ++e) {
    envs.push_back(prototype.clone());
    env_rng.push_back(root.split("env").split(e));
    obs[e] = envs[e]->reset(env_rng[e]);
  }
  RunningStats return_stats(1);
  std::vector<double> running_return(E, 0.0);

  for (std::size_t it = 0; it < iterations; ++it) {
    // Sample-major storage [e][t] so GAE runs per environment.
    PpoBatch batch;
    batch.input_dim = in;
    batch.action_dim = na;
    const std::size_t n = E * T;
    batch.inputs.assign(n * in, 0.0);
    batch.actions.assign(n * na, 0.0);
    batch.old_log_prob.assign(n, 0.0);
    std::vector<double> values(n), rewards(n);
    std::vector<std::uint8_t> dones(n);
    std::vector<std::vector<double>> raw_inputs;
    raw_inputs.reserve(n);
    CurvePoint point;
    point.iteration = it + 1;
    // Frozen for the iteration; 1 until any return has been seen.
    const double reward_scale = 1.0 / std::sqrt(return_stats.variance()[0] + 1e-8);

    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t e = 0; e < E; ++e) {
        const std::size_t i = e * T + t;
        const auto x = net.normalize(obs[e]);
        raw_inputs.push_back(obs[e]);
        const auto f = net.forward(x, 1);
        std::vector<double> a(na);
        for (std::size_t j = 0; j < na; ++j) a[j] = f.mean[j] + std::exp(f.log_std[j]) * act_rng.normal();
        batch.old_log_prob[i] = gaussian_log_prob(a, f.mean, f.log_std);
        values[i] = f.value[0];
        std::copy(x.begin(), x.end(), batch.inputs.begin() + static_cast<std::ptrdiff_t>(i * in));
        std::copy(a.begin(), a.end(), batch.actions.begin() + static_cast<std::ptrdiff_t>(i * na));

        EnvStep s = envs[e]->step(a);
        point.mean_imitation += s.imitation;
        point.mean_reward += s.reward;
        double r = s.reward;
        if (cfg.reward_normalization) {
          // Scale by the running std of the discounted return, no shift.
          running_return[e] = running_return[e] * cfg.gamma + r;
          return_stats.push(running_return[e]);
          r *= reward_scale;
        }
        rewards[i] = r;
        dones[i] = s.done ? 1 : 0;
        if (s.done) {
          ++point.episodes_done;
          running_return[e] = 0.0;
          obs[e] = envs[e]->reset(env_rng[e]);
        } else {
          obs[e] = std::move(s.input);
        }
      }
    }

    batch.advantages.resize(n);
    batch.returns.resize(n);
    for (std::size_t e = 0; e < E; ++e) {
      const double bootstrap = net.forward(net.normalize(obs[e]), 1).value[0];
      const std::size_t lo = e * T;
      const auto g = gae(std::span(rewards).subspan(lo, T), std::span(values).subspan(lo, T),
                         std::span(dones).subspan(lo, T), bootstrap, cfg.gamma, cfg.gae_lambda);
      std::copy(g.advantages.begin(), g.advantages.end(), batch.advantages.begin() + static_cast<std::ptrdiff_t>(lo));
      std::copy(g.returns.begin(), g.returns.end(), batch.returns.begin() + static_cast<std::ptrdiff_t>(lo));
    }

    point.loss = ppo_update(net, opt, std::move(batch), cfg, update_rng);
    // Input statistics change only between iterations, so stored inputs and
    // old log-probabilities stay consistent inside an update.
    for (const auto& x : raw_inputs) net.input_stats().push(x);
    point.mean_imitation /= static_cast<double>(n);
    point.mean_reward /= static_cast<double>(n);
    res.curve.push_back(point);
  }
  return res;
}

void write_learning_curve_csv(std::span<const CurvePoint> curve, std::ostream& out) {
  out << "iteration,mean_imitation,mean_reward,episodes_done,policy_loss,value_loss,entropy,clip_fraction\n";
  out.precision(17);
  for (const auto& p : curve)
    out << p.iteration << ',' << p.mean_imitation << ',' << p.mean_reward << ',' << p.episodes_done << ','
        << p.loss.policy << ',' << p.loss.value << ',' << p.loss.entropy << ',' << p.loss.clip_fraction << '\n';
}

}  // namespace hmx::policy
