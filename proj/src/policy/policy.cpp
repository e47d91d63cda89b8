#include "hmx/policy/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <fstream>
#include <sstream>

#include "hmx/error.hpp"
#include "hmx/io/binary.hpp"
#include "hmx/nn/layers.hpp"

namespace hmx::policy {

namespace {

constexpr std::string_view kMagic = "UH1P";
constexpr std::uint32_t kVersion = 1;
constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // 0.5 * ln(2 pi)

double clamp_log_std(double v) { return std::clamp(v, kMinLogStd, kMaxLogStd); }

}  // namespace

void RunningStats::push(std::span<const double> x) {
  if (x.size() != mean_.size()) throw DimensionError("running stats: expected " + std::to_string(mean_.size()) + " values");
  count_ += 1.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - mean_[i];
    mean_[i] += d / count_;
    m2_[i] += d * (x[i] - mean_[i]);
  }
}

std::vector<double> RunningStats::variance() const {
  std::vector<double> v(mean_.size(), 1.0);
  if (count_ > 0.0)
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m2_[i] / count_;
  return v;
}

void RunningStats::restore(double count, std::vector<double> mean, std::vector<double> m2) {
  if (mean.size() != m2.size()) throw DimensionError("running stats: mean/m2 size mismatch");
  count_ = count;
  mean_ = std::move(mean);
  m2_ = std::move(m2);
}

void PolicyNetConfig::validate() const {
  if (input_dim == 0 || action_dim == 0) throw ValidationError("policy net: input and action dims must be positive");
  for (std::size_t h : hidden)
    if (h == 0) throw ValidationError("policy net: hidden sizes must be positive");
  if (!std::isfinite(init_log_std) || init_log_std < kMinLogStd || init_log_std > kMaxLogStd)
    throw ValidationError("policy net: init_log_std outside [-5, 2]");
}

PolicyNet::PolicyNet(PolicyNetConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  build();
  params_.fill(log_std_, cfg_.init_log_std);
}

void PolicyNet::build() {
  params_ = nn::ParamStore();
  auto make = [&](const std::string& prefix, std::size_t out) {
    Mlp m;
    m.sizes.push_back(cfg_.input_dim);
    for (std::size_t h : cfg_.hidden) m.sizes.push_back(h);
    m.sizes.push_back(out);
    for (std::size_t l = 0; l + 1 < m.sizes.size(); ++l) {
      const std::string p = prefix + ".l" + std::to_string(l);
      m.w.push_back(params_.add(p + ".w", {m.sizes[l + 1], m.sizes[l]}));
      m.b.push_back(params_.add(p + ".b", {m.sizes[l + 1]}));
    }
    return m;
  };
  actor_ = make("actor", cfg_.action_dim);
  log_std_ = params_.add("log_std", {cfg_.action_dim});
  critic_ = make("critic", 1);
  input_stats_ = RunningStats(cfg_.input_dim);
}

PolicyNet PolicyNet::random_init(PolicyNetConfig cfg, std::uint64_t seed) {
  PolicyNet net(std::move(cfg));
  numerics::Prng rng = numerics::Prng(seed).split("policy-init");
  for (const Mlp* m : {&net.actor_, &net.critic_}) {
    for (std::size_t l = 0; l < m->w.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(m->sizes[l]));
      const bool last_actor = m == &net.actor_ && l + 1 == m->w.size();
      net.params_.init_uniform(m->w[l], last_actor ? 0.01 * bound : bound, rng);
      if (last_actor)
        net.params_.fill(m->b[l], 0.0);
      else
        net.params_.init_uniform(m->b[l], bound, rng);
    }
  }
  return net;
}

std::vector<double> PolicyNet::normalize(std::span<const double> raw) const {
  if (raw.size() != cfg_.input_dim)
    throw DimensionError("policy input has " + std::to_string(raw.size()) + " values, expected " +
                         std::to_string(cfg_.input_dim));
  std::vector<double> out(raw.begin(), raw.end());
  if (input_stats_.count() == 0.0) return out;
  const auto var = input_stats_.variance();
  const auto& mean = input_stats_.mean();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::clamp((out[i] - mean[i]) / std::sqrt(var[i] + 1e-8), -10.0, 10.0);
  return out;
}

std::vector<double> PolicyNet::mlp_forward(const Mlp& m, std::span<const double> x, std::size_t n,
                                           std::vector<std::vector<double>>* acts) const {
  std::vector<double> cur(x.begin(), x.end());
  if (acts) acts->clear();
  for (std::size_t l = 0; l < m.w.size(); ++l) {
    std::vector<double> y(n * m.sizes[l + 1]);
    nn::linear_forward(n, m.sizes[l], m.sizes[l + 1], cur, params_[m.w[l]], params_[m.b[l]], y);
    if (l + 1 < m.w.size())
      for (double& v : y) v = std::tanh(v);
    if (acts) acts->push_back(y);
    cur = std::move(y);
  }
  return cur;
}

void PolicyNet::mlp_backward(const Mlp& m, const std::vector<std::vector<double>>& acts, std::span<const double> x,
                             std::size_t n, std::span<const double> dy, std::span<double> grad) const {
  std::vector<double> d(dy.begin(), dy.end());
  for (std::size_t l = m.w.size(); l-- > 0;) {
    if (l + 1 < m.w.size())
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - acts[l][i] * acts[l][i];
    std::span<const double> in = l == 0 ? x : std::span<const double>(acts[l - 1]);
    std::vector<double> dx;
    if (l > 0) dx.assign(n * m.sizes[l], 0.0);
    nn::linear_backward(n, m.sizes[l], m.sizes[l + 1], in, params_[m.w[l]], d, params_.in(grad, m.w[l]),
                        params_.in(grad, m.b[l]), dx);
    d = std::move(dx);
  }
}

PolicyNet::Forward PolicyNet::forward(std::span<const double> x, std::size_t n, Tape* tape) const {
  if (x.size() != n * cfg_.input_dim) throw DimensionError("policy forward: input size mismatch");
  Forward f;
  f.mean = mlp_forward(actor_, x, n, tape ? &tape->actor : nullptr);
  f.value = mlp_forward(critic_, x, n, tape ? &tape->critic : nullptr);
  const auto ls = params_[log_std_];
  f.log_std.resize(ls.size());
  std::transform(ls.begin(), ls.end(), f.log_std.begin(), clamp_log_std);
  return f;
}

void PolicyNet::backward(const Tape& tape, std::span<const double> x, std::size_t n, std::span<const double> dmean,
                         std::span<const double> dvalue, std::span<const double> dlog_std,
                         std::span<double> grad) const {
  if (grad.size() != params_.size()) throw DimensionError("policy backward: gradient buffer size mismatch");
  mlp_backward(actor_, tape.actor, x, n, dmean, grad);
  mlp_backward(critic_, tape.critic, x, n, dvalue, grad);
  const auto ls = params_[log_std_];
  auto g = params_.in(grad, log_std_);
  for (std::size_t j = 0; j < g.size(); ++j)
    if (ls[j] > kMinLogStd && ls[j] < kMaxLogStd) g[j] += dlog_std[j];
}

std::vector<double> PolicyNet::act_mean(std::span<const double> raw) const {
  const auto x = normalize(raw);
  return forward(x, 1).mean;
}

std::vector<double> PolicyNet::act_sample(std::span<const double> raw, numerics::Prng& rng, double* log_prob) const {
  const auto x = normalize(raw);
  const Forward f = forward(x, 1);
  std::vector<double> a(cfg_.action_dim);
  for (std::size_t j = 0; j < a.size(); ++j) a[j] = f.mean[j] + std::exp(f.log_std[j]) * rng.normal();
  if (log_prob) *log_prob = gaussian_log_prob(a, f.mean, f.log_std);
  return a;
}

std::string PolicyNet::serialize() const {
  io::BinaryWriter w(kMagic, kVersion);
  w.u64(cfg_.input_dim);
  w.u64(cfg_.action_dim);
  w.u64(cfg_.hidden.size());
  for (std::size_t h : cfg_.hidden) w.u64(h);
  w.f64(cfg_.init_log_std);
  params_.write(w);
  w.f64(input_stats_.count());
  for (double v : input_stats_.mean()) w.f64(v);
  for (double v : input_stats_.m2()) w.f64(v);
  return w.bytes();
}

void PolicyNet::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

PolicyNet PolicyNet::deserialize(std::string bytes) {
  io::BinaryReader r(std::move(bytes), kMagic, kVersion);
  PolicyNetConfig cfg;
  cfg.input_dim = r.u64();
  cfg.action_dim = r.u64();
  const std::uint64_t layers = r.u64();
  if (layers > 64) r.fail("implausible hidden layer count " + std::to_string(layers));
  cfg.hidden.clear();
  for (std::uint64_t i = 0; i < layers; ++i) cfg.hidden.push_back(r.u64());
  cfg.init_log_std = r.f64();
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    r.fail(e.what());
  }
  PolicyNet net(cfg);
  net.params_.read(r);
  const double count = r.f64();
  std::vector<double> mean(cfg.input_dim), m2(cfg.input_dim);
  for (double& v : mean) v = r.f64();
  for (double& v : m2) v = r.f64();
  net.input_stats_.restore(count, std::move(mean), std::move(m2));
  if (!r.done()) r.fail("trailing bytes after policy file");
  return net;
}

PolicyNet PolicyNet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str());
}

double gaussian_log_prob(std::span<const double> a, std::span<const double> mean, std::span<const double> log_std) {
  if (a.size() != mean.size() || a.size() != log_std.size()) throw DimensionError("gaussian_log_prob: size mismatch");
  double lp = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double z = (a[j] - mean[j]) * std::exp(-log_std[j]);
    lp += -0.5 * z * z - log_std[j] - kLogSqrt2Pi;
  }
  return lp;
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values, std::span<const std::uint8_t> dones,
              double bootstrap, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n)
    throw DimensionError("gae: rewards, values and dones must have equal lengths");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_adv = 0.0;
  double next_value = bootstrap;
  for (std::size_t t = n; t-- > 0;) {
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    next_adv = delta + gamma * lambda * live * next_adv;
    out.advantages[t] = next_adv;
    out.returns[t] = next_adv + values[t];
    next_value = values[t];
  }
  return out;
}

void PpoConfig::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw ValidationError(std::string("ppo config: ") + name + " must be positive");
  };
  positive(gamma, "gamma");
  positive(gae_lambda, "gae_lambda");
  if (gamma > 1.0 || gae_lambda > 1.0) throw ValidationError("ppo config: gamma and gae_lambda must be <= 1");
  if (rollout_len == 0 || epochs_per_rollout == 0 || minibatches == 0 || num_envs == 0)
    throw ValidationError("ppo config: rollout_len, epochs, minibatches and num_envs must be positive");
  positive(entropy_coef, "entropy_coef");
  positive(value_coef, "value_coef");
  positive(learning_rate, "learning_rate");
  if (!(clip > 0.0 && clip < 1.0)) throw ValidationError("ppo config: clip must be in (0, 1)");
  if (!(max_grad_norm >= 0.0)) throw ValidationError("ppo config: max_grad_norm must be >= 0");
  if (minibatches > rollout_len * num_envs) throw ValidationError("ppo config: more minibatches than samples");
}

PpoLoss ppo_loss(const PolicyNet& net, const PpoBatch& batch, std::span<const std::size_t> rows, const PpoConfig& cfg,
                 std::span<double> grad) {
  const std::size_t in = net.config().input_dim, na = net.config().action_dim;
  if (batch.input_dim != in || batch.action_dim != na) throw DimensionError("ppo batch dims do not match the net");
  const std::size_t total = batch.size();
  if (batch.inputs.size() != total * in || batch.actions.size() != total * na || batch.advantages.size() != total ||
      batch.returns.size() != total)
    throw DimensionError("ppo batch arrays have inconsistent lengths");
  std::vector<std::size_t> all;
  if (rows.empty()) {
    all.resize(total);
    for (std::size_t i = 0; i < total; ++i) all[i] = i;
    rows = all;
  }
  const std::size_t m = rows.size();
  if (m == 0) throw ValidationError("ppo loss: empty batch");

  std::vector<double> x(m * in), a(m * na);
  for (std::size_t i = 0; i < m; ++i) {
    if (rows[i] >= total) throw DimensionError("ppo loss: row index out of range");
    std::copy_n(batch.inputs.begin() + static_cast<std::ptrdiff_t>(rows[i] * in), in, x.begin() + static_cast<std::ptrdiff_t>(i * in));
    std::copy_n(batch.actions.begin() + static_cast<std::ptrdiff_t>(rows[i] * na), na, a.begin() + static_cast<std::ptrdiff_t>(i * na));
  }
  PolicyNet::Tape tape;
  const auto f = net.forward(x, m, grad.empty() ? nullptr : &tape);

  PpoLoss L;
  L.min_ratio_in_clipped_term = 1.0;
  L.max_ratio_in_clipped_term = 1.0;
  const double inv_m = 1.0 / static_cast<double>(m);
  std::vector<double> dmean(m * na, 0.0), dvalue(m, 0.0), dlog_std(na, 0.0);
  std::vector<double> inv_var(na);
  for (std::size_t j = 0; j < na; ++j) inv_var[j] = std::exp(-2.0 * f.log_std[j]);

  std::size_t clipped = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t row = rows[i];
    const std::span<const double> ai(a.data() + i * na, na), mu(f.mean.data() + i * na, na);
    const double logp = gaussian_log_prob(ai, mu, f.log_std);
    const double ratio = std::exp(logp - batch.old_log_prob[row]);
    const double adv = batch.advantages[row];
    const double rc = std::clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip);
    const double s1 = ratio * adv, s2 = rc * adv;
    L.policy -= std::min(s1, s2) * inv_m;
    L.policy_unclipped -= s1 * inv_m;
    L.min_ratio_in_clipped_term = std::min(L.min_ratio_in_clipped_term, rc);
    L.max_ratio_in_clipped_term = std::max(L.max_ratio_in_clipped_term, rc);
    if (std::abs(ratio - 1.0) > cfg.clip) ++clipped;

    const double dv = f.value[i] - batch.returns[row];
    L.value += dv * dv * inv_m;
    if (!grad.empty()) {
      dvalue[i] = cfg.value_coef * 2.0 * dv * inv_m;
      // The minimum takes the unclipped branch on ties; the clipped branch is
      // constant in the parameters.
      const double dlogp = s1 <= s2 ? -adv * ratio * inv_m : 0.0;
      if (dlogp != 0.0) {
        for (std::size_t j = 0; j < na; ++j) {
          const double diff = ai[j] - mu[j];
          dmean[i * na + j] = dlogp * diff * inv_var[j];
          dlog_std[j] += dlogp * (diff * diff * inv_var[j] - 1.0);
        }
      }
    }
  }
  for (std::size_t j = 0; j < na; ++j) L.entropy += f.log_std[j] + 0.5 + kLogSqrt2Pi;
  L.clip_fraction = static_cast<double>(clipped) * inv_m;
  L.total = L.policy + cfg.value_coef * L.value - cfg.entropy_coef * L.entropy;
  if (!grad.empty()) {
    for (double& g : dlog_std) g -= cfg.entropy_coef;
    net.backward(tape, x, m, dmean, dvalue, dlog_std, grad);
  }
  return L;
}

PpoLoss ppo_update(PolicyNet& net, numerics::Adam& opt, PpoBatch batch, const PpoConfig& cfg, numerics::Prng& rng) {
  cfg.validate();
  const std::size_t n = batch.size();
  if (n < cfg.minibatches) throw ValidationError("ppo update: fewer samples than minibatches");
  if (opt.state().m.size() != net.params().size()) throw DimensionError("ppo update: optimizer size mismatch");

  double mean = 0.0;
  for (double v : batch.advantages) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : batch.advantages) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(n));
  for (double& v : batch.advantages) v = (v - mean) / (sd + 1e-8);

  std::vector<std::size_t> order(n);
  std::vector<double> grad(net.params().size());
  PpoLoss acc;
  acc.min_ratio_in_clipped_term = 1.0;
  acc.max_ratio_in_clipped_term = 1.0;
  std::size_t evals = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs_per_rollout; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t mb = 0; mb < cfg.minibatches; ++mb) {
      const std::size_t lo = mb * n / cfg.minibatches, hi = (mb + 1) * n / cfg.minibatches;
      std::fill(grad.begin(), grad.end(), 0.0);
      const PpoLoss L =
          ppo_loss(net, batch, std::span<const std::size_t>(order.data() + lo, hi - lo), cfg, grad);
      if (!std::isfinite(L.total)) {
        std::ostringstream msg;
        msg << "ppo update: non-finite loss at epoch " << epoch << " minibatch " << mb << " (policy " << L.policy
            << ", value " << L.value << ", entropy " << L.entropy << ", clip fraction " << L.clip_fraction << ")";
        throw NumericError(msg.str());
      }
      if (cfg.max_grad_norm > 0.0) {
        double sq = 0.0;
        for (double g : grad) sq += g * g;
        const double norm = std::sqrt(sq);
        if (norm > cfg.max_grad_norm)
          for (double& g : grad) g *= cfg.max_grad_norm / norm;
      }
      opt.step(net.params().values(), grad);
      acc.policy += L.policy;
      acc.policy_unclipped += L.policy_unclipped;
      acc.value += L.value;
      acc.entropy += L.entropy;
      acc.total += L.total;
      acc.clip_fraction += L.clip_fraction;
      acc.min_ratio_in_clipped_term = std::min(acc.min_ratio_in_clipped_term, L.min_ratio_in_clipped_term);
      acc.max_ratio_in_clipped_term = std::max(acc.max_ratio_in_clipped_term, L.max_ratio_in_clipped_term);
      ++evals;
    }
  }
  const double k = 1.0 / static_cast<double>(evals);
  acc.policy *= k;
  acc.policy_unclipped *= k;
  acc.value *= k;
  acc.entropy *= k;
  acc.total *= k;
  acc.clip_fraction *= k;
  return acc;
}

}  // namespace hmx::policy
