#include <cmath>
#include <memory>
#include <numbers>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "hmx/body/robot_model.hpp"
#include "hmx/error.hpp"
#include "hmx/numerics/finite_diff.hpp"
#include "hmx/policy/env.hpp"
#include "hmx/policy/policy.hpp"

using namespace hmx::policy;
using hmx::numerics::Prng;

namespace {

// Double loop over sum_k (gamma lambda)^k delta_{t+k}, cut at terminals.
std::vector<double> gae_brute(const std::vector<double>& r, const std::vector<double>& v,
                              const std::vector<std::uint8_t>& d, double boot, double g, double l) {
  const std::size_t n = r.size();
  std::vector<double> delta(n), out(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : boot;
    delta[t] = r[t] + g * next * (d[t] ? 0.0 : 1.0) - v[t];
  }
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      out[t] += w * delta[k];
      if (d[k]) break;
      w *= g * l;
    }
  }
  return out;
}

PolicyNetConfig micro() { return {3, 2, {4}, -0.3}; }

PpoBatch random_batch(const PolicyNet& net, std::size_t n, std::uint64_t seed, double spread) {
  Prng rng(seed);
  const auto& c = net.config();
  PpoBatch b;
  b.input_dim = c.input_dim;
  b.action_dim = c.action_dim;
  for (std::size_t i = 0; i < n * c.input_dim; ++i) b.inputs.push_back(rng.uniform(-1.0, 1.0));
  const auto f = net.forward(b.inputs, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c.action_dim; ++j)
      b.actions.push_back(f.mean[i * c.action_dim + j] + std::exp(f.log_std[j]) * rng.normal());
    const double lp = gaussian_log_prob(std::span(b.actions).subspan(i * c.action_dim, c.action_dim),
                                        std::span(f.mean).subspan(i * c.action_dim, c.action_dim), f.log_std);
    b.old_log_prob.push_back(lp + rng.uniform(-spread, spread));
    b.advantages.push_back(rng.normal());
    b.returns.push_back(rng.normal());
  }
  return b;
}

}  // namespace

TEST_CASE("gae: single step and lambda = 0") {
  const auto one = gae(std::vector<double>{1.5}, std::vector<double>{0.4}, std::vector<std::uint8_t>{0}, 2.0, 0.99, 0.95);
  CHECK(one.advantages[0] == doctest::Approx(1.5 + 0.99 * 2.0 - 0.4).epsilon(1e-15));
  CHECK(one.returns[0] == doctest::Approx(1.5 + 0.99 * 2.0).epsilon(1e-15));

  const std::vector<double> r{1, -2, 0.5, 3}, v{0.1, 0.2, -0.3, 0.4};
  const std::vector<std::uint8_t> d{0, 1, 0, 0};
  const auto td = gae(r, v, d, 0.7, 0.9, 0.0);
  CHECK(td.advantages[0] == doctest::Approx(1 + 0.9 * 0.2 - 0.1));
  CHECK(td.advantages[1] == doctest::Approx(-2 - 0.2));
  CHECK(td.advantages[2] == doctest::Approx(0.5 + 0.9 * 0.4 + 0.3));
  CHECK(td.advantages[3] == doctest::Approx(3 + 0.9 * 0.7 - 0.4));
}

TEST_CASE("gae: recursive form equals the double-loop sum") {
  Prng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> r(50), v(50);
    std::vector<std::uint8_t> d(50);
    for (std::size_t t = 0; t < 50; ++t) {
      r[t] = rng.normal();
      v[t] = rng.normal();
      d[t] = trial % 2 && rng.uniform() < 0.1;
    }
    const double boot = rng.normal();
    const auto got = gae(r, v, d, boot, 0.99, 0.95);
    const auto want = gae_brute(r, v, d, boot, 0.99, 0.95);
    for (std::size_t t = 0; t < 50; ++t) {
      CHECK(std::abs(got.advantages[t] - want[t]) <= 1e-10);
      CHECK(std::abs(got.returns[t] - (want[t] + v[t])) <= 1e-10);
    }
  }
  CHECK_THROWS_AS(gae(std::vector<double>(3), std::vector<double>(2), std::vector<std::uint8_t>(3), 0, 0.99, 0.95),
                  hmx::DimensionError);
}

TEST_CASE("running stats converge on a stationary stream") {
  RunningStats s;
  Prng rng(5);
  for (int i = 0; i < 100000; ++i) s.push(2.0 + 3.0 * rng.normal());
  CHECK(std::abs(s.mean()[0] - 2.0) / 2.0 < 0.02);
  CHECK(std::abs(s.variance()[0] - 9.0) / 9.0 < 0.02);

  RunningStats small(2);
  small.push(std::vector<double>{1, 10});
  small.push(std::vector<double>{3, 10});
  small.push(std::vector<double>{8, 10});
  CHECK(small.mean()[0] == doctest::Approx(4.0));
  CHECK(small.variance()[0] == doctest::Approx(26.0 / 3.0));
  CHECK(small.variance()[1] == doctest::Approx(0.0));
}

TEST_CASE("policy net: log-std clamp, shapes, validation") {
  PolicyNet net(micro());
  std::size_t slot = 0;
  while (net.params().slots()[slot].name != "log_std") ++slot;
  auto ls = net.params()[slot];
  ls[0] = 7.0;
  ls[1] = -9.0;
  const auto f = net.forward(std::vector<double>(6, 0.1), 2);
  CHECK(f.mean.size() == 4);
  CHECK(f.value.size() == 2);
  CHECK(f.log_std[0] == 2.0);
  CHECK(f.log_std[1] == -5.0);
  CHECK_THROWS_AS(PolicyNet(PolicyNetConfig{0, 2, {4}, 0.0}), hmx::ValidationError);
  CHECK_THROWS_AS(PolicyNet(PolicyNetConfig{3, 2, {4}, 3.0}), hmx::ValidationError);
  CHECK_THROWS_AS(net.normalize(std::vector<double>(4)), hmx::DimensionError);

  PpoConfig bad;
  bad.clip = 1.0;
  CHECK_THROWS_AS(bad.validate(), hmx::ValidationError);
  bad = PpoConfig{};
  bad.gamma = 0.0;
  CHECK_THROWS_AS(bad.validate(), hmx::ValidationError);
  CHECK_NOTHROW(PpoConfig{}.validate());
}

TEST_CASE("ppo loss: unchanged net gives ratio 1 and equal objectives") {
  const auto net = PolicyNet::random_init(micro(), 3);
  const auto batch = random_batch(net, 16, 9, 0.0);
  const auto L = ppo_loss(net, batch, {}, PpoConfig{}, {});
  CHECK(L.policy == doctest::Approx(L.policy_unclipped).epsilon(1e-12));
  CHECK(L.min_ratio_in_clipped_term == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(L.max_ratio_in_clipped_term == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(L.clip_fraction == 0.0);
}

TEST_CASE("ppo loss: zero advantages leave the actor gradient at zero") {
  const auto net = PolicyNet::random_init(micro(), 4);
  auto batch = random_batch(net, 12, 10, 0.5);
  std::fill(batch.advantages.begin(), batch.advantages.end(), 0.0);
  PpoConfig cfg;
  std::vector<double> grad(net.params().size(), 0.0);
  const auto L = ppo_loss(net, batch, {}, cfg, grad);
  CHECK(L.policy == 0.0);
  for (const auto& slot : net.params().slots()) {
    const auto g = net.params().in(grad, &slot - net.params().slots().data());
    if (slot.name.rfind("actor", 0) == 0)
      for (double v : g) CHECK(v == 0.0);
    if (slot.name == "log_std")
      for (double v : g) CHECK(v == doctest::Approx(-cfg.entropy_coef).epsilon(1e-15));
  }
}

TEST_CASE("ppo loss: analytic gradient matches finite differences") {
  auto net = PolicyNet::random_init(micro(), 6);
  // Ratios spread over [e^-0.6, e^0.6]: both the clipped and unclipped branches
  // are taken. Samples near the clip boundary would make the loss kinked
  // inside the FD stencil, so they are nudged away.
  auto batch = random_batch(net, 24, 11, 0.6);
  const auto f = net.forward(batch.inputs, batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double lp = gaussian_log_prob(std::span(batch.actions).subspan(2 * i, 2),
                                        std::span(f.mean).subspan(2 * i, 2), f.log_std);
    const double r = std::exp(lp - batch.old_log_prob[i]);
    if (std::abs(r - 0.8) < 0.02 || std::abs(r - 1.2) < 0.02) batch.old_log_prob[i] += 0.1;
  }
  PpoConfig cfg;
  std::vector<double> grad(net.params().size(), 0.0);
  const auto L = ppo_loss(net, batch, {}, cfg, grad);
  CHECK(L.clip_fraction > 0.1);
  CHECK(L.clip_fraction < 0.9);

  std::vector<double> x0(net.params().values().begin(), net.params().values().end());
  const auto fd = hmx::numerics::finite_diff_grad(
      [&](std::span<const double> x) {
        std::copy(x.begin(), x.end(), net.params().values().begin());
        return ppo_loss(net, batch, {}, cfg, {}).total;
      },
      x0, 1e-6);
  std::copy(x0.begin(), x0.end(), net.params().values().begin());
  CHECK(hmx::numerics::max_relative_error(grad, fd, 1e-4) < 1e-3);
}

TEST_CASE("ppo update: clipped term stays in [0.8, 1.2]; non-finite loss throws") {
  auto net = PolicyNet::random_init(micro(), 7);
  const auto batch = random_batch(net, 40, 12, 2.0);
  const auto L = ppo_loss(net, batch, {}, PpoConfig{}, {});
  CHECK(L.min_ratio_in_clipped_term >= 0.8 - 1e-15);
  CHECK(L.max_ratio_in_clipped_term <= 1.2 + 1e-15);
  CHECK(L.clip_fraction > 0.0);

  PpoConfig cfg;
  cfg.minibatches = 4;
  hmx::numerics::Adam opt(net.params().size(), hmx::numerics::AdamConfig{cfg.learning_rate});
  Prng rng(1);
  const auto U = ppo_update(net, opt, batch, cfg, rng);
  CHECK(std::isfinite(U.total));
  CHECK(U.min_ratio_in_clipped_term >= 0.8 - 1e-15);
  CHECK(U.max_ratio_in_clipped_term <= 1.2 + 1e-15);

  net.params().values()[0] = std::nan("");
  CHECK_THROWS_AS(ppo_update(net, opt, batch, cfg, rng), hmx::NumericError);
}

TEST_CASE("policy file round trip") {
  auto net = PolicyNet::random_init(micro(), 8);
  net.input_stats().push(std::vector<double>{1, 2, 3});
  net.input_stats().push(std::vector<double>{2, 0, 3});
  const std::string bytes = net.serialize();
  CHECK(bytes.substr(0, 4) == "UH1P");
  const auto back = PolicyNet::deserialize(bytes);
  CHECK(back.serialize() == bytes);
  CHECK(back.config() == net.config());
  const std::vector<double> x{0.3, -1.0, 2.5};
  const auto a = net.act_mean(x), b = back.act_mean(x);
  for (std::size_t j = 0; j < 2; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-5));
  CHECK_THROWS_AS(PolicyNet::deserialize(bytes.substr(0, bytes.size() - 3)), hmx::ParseError);
  CHECK_THROWS_AS(PolicyNet::deserialize("UH1X" + bytes.substr(4)), hmx::ParseError);
}

TEST_CASE("reduced env: tracks its target under a perfect feed-forward action") {
  ReducedEnv env;
  Prng rng(2);
  auto x = env.reset(rng);
  REQUIRE(x.size() == ReducedEnv::kInputDim);
  double worst = 3.0;
  for (std::size_t k = 0; k < 100; ++k) {
    // Feed the next target: the PD loop lags slightly behind.
    const auto s = env.step(std::vector<double>{x[6], x[7]});
    worst = std::min(worst, s.imitation);
    CHECK(s.done == (k == 99));
    x = s.input;
  }
  CHECK(worst > 2.5);
  CHECK_THROWS_AS(env.step(std::vector<double>{0.0}), hmx::DimensionError);
}

TEST_CASE("train_policy: zero iterations return the initialization; runs are deterministic") {
  PpoConfig cfg;
  cfg.num_envs = 4;
  const auto zero = train_policy(ReducedEnv{}, cfg, {16}, 5, 0);
  CHECK(zero.curve.empty());
  CHECK(zero.net.serialize() == PolicyNet::random_init({ReducedEnv::kInputDim, 2, {16}, 0.0}, 5).serialize());

  const auto a = train_policy(ReducedEnv{}, cfg, {16}, 5, 4);
  const auto b = train_policy(ReducedEnv{}, cfg, {16}, 5, 4);
  REQUIRE(a.curve.size() == 4);
  std::ostringstream ca, cb;
  write_learning_curve_csv(a.curve, ca);
  write_learning_curve_csv(b.curve, cb);
  CHECK(ca.str() == cb.str());
  CHECK(a.net.serialize() == b.net.serialize());
  const auto c = train_policy(ReducedEnv{}, cfg, {16}, 6, 4);
  CHECK(c.net.serialize() != a.net.serialize());
}

namespace {

hmx::retarget::RobotMotion arm_wave(const hmx::body::RobotModel& robot, std::size_t frames) {
  hmx::retarget::RobotMotion m;
  m.q = hmx::numerics::Matrix(frames, 27);
  for (std::size_t t = 0; t < frames; ++t) {
    const double ph = std::numbers::pi * static_cast<double>(t) / 20.0;
    m.q(t, 13) = 0.4 * std::sin(ph);
    m.q(t, 16) = 0.8 + 0.4 * std::sin(ph);
    hmx::body::RootState r;
    r.translation = hmx::body::Vec3(0.5 * static_cast<double>(t) / 20.0, 0.0, 0.95);
    m.root.push_back(r);
    m.keypoints.positions.push_back(hmx::body::fk_robot(robot, m.q.row(t), r).keypoints);
    m.ik_residual.push_back(0.0);
  }
  return m;
}

}  // namespace

TEST_CASE("tracking env and policy source on the full plant") {
  auto robot = std::make_shared<const hmx::body::RobotModel>(hmx::body::default_robot_model());
  auto motions = std::make_shared<const std::vector<hmx::retarget::RobotMotion>>(
      std::vector<hmx::retarget::RobotMotion>{arm_wave(*robot, 41)});
  hmx::control::PlantConfig plant;
  TrackingEnv env(robot, plant, hmx::control::PdGains::from_robot(*robot), motions, {30, 0.2});
  Prng rng(3);
  const auto x = env.reset(rng);
  CHECK(x.size() == TrackingEnv::kInputDim);
  std::size_t steps = 0;
  bool done = false;
  while (!done) {
    const auto s = env.step(env.state().q);
    CHECK(std::isfinite(s.reward));
    CHECK(s.imitation > 0.0);
    CHECK(s.imitation <= 13.0);
    done = s.done;
    ++steps;
  }
  CHECK(steps == 30);

  PpoConfig cfg;
  cfg.num_envs = 2;
  cfg.rollout_len = 8;
  cfg.epochs_per_rollout = 1;
  cfg.minibatches = 2;
  const auto trained = train_policy(env, cfg, {16}, 1, 2);
  PolicySource src(trained.net);
  const auto traj = hmx::control::rollout(*robot, plant, hmx::control::PdGains::from_robot(*robot),
                                          hmx::control::initial_state(*robot, plant, (*motions)[0]), src,
                                          (*motions)[0], 20);
  CHECK(traj.steps.size() == 20);
  CHECK(std::isfinite(traj.mean_imitation()));
  CHECK_THROWS_AS(PolicySource(PolicyNet(micro())), hmx::DimensionError);
}
