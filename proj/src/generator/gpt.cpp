#include "hmx/generator/gpt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>

#include "hmx/error.hpp"
#include "hmx/io/binary.hpp"
#include "hmx/nn/layers.hpp"
#include "hmx/simd/kernels.hpp"

namespace hmx::generator {

namespace {

constexpr std::string_view kMagic = "UH1G";
constexpr std::uint32_t kVersion = 1;

std::span<double> rows(std::vector<double>& v, std::size_t r, std::size_t width, std::size_t count = 1) {
  return std::span<double>(v).subspan(r * width, count * width);
}

}  // namespace

GptConfig GptConfig::desk(std::size_t codebook_size) {
  GptConfig c;
  c.vocab = codebook_size + 1;
  return c;
}

GptConfig GptConfig::full_scale(std::size_t codebook_size) {
  GptConfig c;
  c.layers = 18;
  c.heads = 16;
  c.model_dim = 1024;
  c.context_len = 128;
  c.vocab = codebook_size + 1;
  c.d_text = 512;
  return c;
}

void GptConfig::validate() const {
  if (layers < 1) throw ValidationError("gpt config: layers must be >= 1");
  if (heads < 1 || model_dim < 1 || model_dim % heads != 0)
    throw ValidationError("gpt config: model_dim must be a positive multiple of heads");
  if (context_len < 2) throw ValidationError("gpt config: context_len must be >= 2");
  if (vocab < 3) throw ValidationError("gpt config: vocab must be >= 3");
  if (d_text < 1) throw ValidationError("gpt config: d_text must be >= 1");
  if (!(dropout >= 0.0) || !(dropout < 1.0)) throw ValidationError("gpt config: dropout must be in [0, 1)");
}

struct Gpt::Tape {
  struct BlockTape {
    std::vector<double> x_in, ln1, ln1_mean, ln1_rstd, qkv, probs, att, proj, mask1, h, ln2, ln2_mean, ln2_rstd,
        fc1, act, fc2, mask2;
  };
  std::size_t n = 0;
  std::vector<BlockTape> blocks;
  std::vector<double> x_final, lnf, lnf_mean, lnf_rstd;
};

Gpt::Gpt(GptConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  build();
}

void Gpt::build() {
  const std::size_t d = cfg_.model_dim;
  text_w_ = params_.add("text.w", {d, cfg_.d_text});
  text_b_ = params_.add("text.b", {d});
  tok_emb_ = params_.add("tok_emb", {cfg_.vocab, d});
  if (cfg_.positional == Positional::Learned) pos_emb_ = params_.add("pos_emb", {cfg_.context_len, d});
  for (std::size_t l = 0; l < cfg_.layers; ++l) {
    const std::string p = "blk" + std::to_string(l) + ".";
    Block b{};
    b.ln1_g = params_.add(p + "ln1.g", {d});
    b.ln1_b = params_.add(p + "ln1.b", {d});
    b.qkv_w = params_.add(p + "attn.qkv.w", {3 * d, d});
    b.qkv_b = params_.add(p + "attn.qkv.b", {3 * d});
    b.proj_w = params_.add(p + "attn.proj.w", {d, d});
    b.proj_b = params_.add(p + "attn.proj.b", {d});
    b.ln2_g = params_.add(p + "ln2.g", {d});
    b.ln2_b = params_.add(p + "ln2.b", {d});
    b.fc1_w = params_.add(p + "mlp.fc1.w", {4 * d, d});
    b.fc1_b = params_.add(p + "mlp.fc1.b", {4 * d});
    b.fc2_w = params_.add(p + "mlp.fc2.w", {d, 4 * d});
    b.fc2_b = params_.add(p + "mlp.fc2.b", {d});
    blocks_.push_back(b);
  }
  lnf_g_ = params_.add("lnf.g", {d});
  lnf_b_ = params_.add("lnf.b", {d});
  head_w_ = params_.add("head.w", {cfg_.vocab, d});
  head_b_ = params_.add("head.b", {cfg_.vocab});
}

Gpt Gpt::random_init(GptConfig cfg, std::uint64_t seed) {
  Gpt g(cfg);
  numerics::Prng rng(seed);
  auto& p = g.params_;
  const auto normal_fill = [&](std::size_t slot, double sd) {
    for (double& v : p[slot]) v = sd * rng.normal();
  };
  const double proj_sd = 0.02 / std::sqrt(2.0 * static_cast<double>(cfg.layers));
  normal_fill(g.text_w_, 0.02);
  normal_fill(g.tok_emb_, 0.02);
  if (cfg.positional == Positional::Learned) normal_fill(g.pos_emb_, 0.01);
  for (const Block& b : g.blocks_) {
    p.fill(b.ln1_g, 1.0);
    p.fill(b.ln2_g, 1.0);
    normal_fill(b.qkv_w, 0.02);
    normal_fill(b.proj_w, proj_sd);
    normal_fill(b.fc1_w, 0.02);
    normal_fill(b.fc2_w, proj_sd);
  }
  p.fill(g.lnf_g_, 1.0);
  normal_fill(g.head_w_, 0.02);
  return g;
}

void Gpt::check_inputs(std::span<const double> text, std::span<const int> tokens, std::size_t positions) const {
  if (text.size() != cfg_.d_text)
    throw DimensionError("gpt: text embedding has " + std::to_string(text.size()) + " entries, expected " +
                         std::to_string(cfg_.d_text));
  for (double v : text)
    if (!std::isfinite(v)) throw ValidationError("gpt: non-finite text embedding");
  if (positions > cfg_.context_len)
    throw ValidationError("gpt: " + std::to_string(positions) + " positions exceed the context length " +
                          std::to_string(cfg_.context_len));
  for (std::size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i] < 0 || tokens[i] >= static_cast<int>(cfg_.vocab))
      throw ValidationError("gpt: token " + std::to_string(tokens[i]) + " at position " + std::to_string(i) +
                            " outside the vocabulary");
}

std::vector<double> Gpt::forward(std::span<const double> text, std::span<const int> tokens, Tape* tape,
                                 numerics::Prng* dropout_rng) const {
  const std::size_t n = tokens.size() + 1;
  const std::size_t d = cfg_.model_dim;
  const std::size_t nh = cfg_.heads;
  const std::size_t dh = d / nh;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool drop = dropout_rng && cfg_.dropout > 0.0;
  const double keep_scale = 1.0 / (1.0 - cfg_.dropout);

  std::vector<double> x(n * d, 0.0);
  nn::linear_forward(1, cfg_.d_text, d, text, params_[text_w_], params_[text_b_], rows(x, 0, d));
  for (std::size_t i = 1; i < n; ++i) {
    const auto e = params_[tok_emb_].subspan(static_cast<std::size_t>(tokens[i - 1]) * d, d);
    std::copy(e.begin(), e.end(), x.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (cfg_.positional == Positional::Learned) {
      simd::axpy(1.0, params_[pos_emb_].subspan(i * d, d), rows(x, i, d));
    } else {
      for (std::size_t k = 0; k < d; ++k) {
        const double freq = std::pow(10000.0, -static_cast<double>(k - k % 2) / static_cast<double>(d));
        x[i * d + k] += k % 2 == 0 ? std::sin(static_cast<double>(i) * freq) : std::cos(static_cast<double>(i) * freq);
      }
    }
  }
  if (tape) {
    tape->n = n;
    tape->blocks.assign(blocks_.size(), {});
  }

  std::vector<double> scratch_mean(n), scratch_rstd(n);
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const Block& b = blocks_[l];
    Tape::BlockTape local;
    Tape::BlockTape& t = tape ? tape->blocks[l] : local;
    t.x_in = x;
    t.ln1.assign(n * d, 0.0);
    t.ln1_mean.assign(n, 0.0);
    t.ln1_rstd.assign(n, 0.0);
    nn::layernorm_forward(n, d, x, params_[b.ln1_g], params_[b.ln1_b], t.ln1, t.ln1_mean, t.ln1_rstd);
    t.qkv.assign(n * 3 * d, 0.0);
    nn::linear_forward(n, d, 3 * d, t.ln1, params_[b.qkv_w], params_[b.qkv_b], t.qkv);

    t.probs.assign(nh * n * n, 0.0);
    t.att.assign(n * d, 0.0);
    for (std::size_t hh = 0; hh < nh; ++hh) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* q = t.qkv.data() + i * 3 * d + hh * dh;
        double* pr = t.probs.data() + (hh * n + i) * n;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* k = t.qkv.data() + j * 3 * d + d + hh * dh;
          pr[j] = simd::kernels().dot(q, k, dh) * inv_sqrt;
        }
        nn::softmax_inplace(std::span<double>(pr, i + 1));
        double* o = t.att.data() + i * d + hh * dh;
        for (std::size_t j = 0; j <= i; ++j) simd::kernels().axpy(pr[j], t.qkv.data() + j * 3 * d + 2 * d + hh * dh, o, dh);
      }
    }
    t.proj.assign(n * d, 0.0);
    nn::linear_forward(n, d, d, t.att, params_[b.proj_w], params_[b.proj_b], t.proj);
    t.h = x;
    if (drop) {
      t.mask1.resize(n * d);
      for (double& m : t.mask1) m = dropout_rng->uniform() < cfg_.dropout ? 0.0 : keep_scale;
      for (std::size_t i = 0; i < n * d; ++i) t.h[i] += t.proj[i] * t.mask1[i];
    } else {
      for (std::size_t i = 0; i < n * d; ++i) t.h[i] += t.proj[i];
    }

    t.ln2.assign(n * d, 0.0);
    t.ln2_mean.assign(n, 0.0);
    t.ln2_rstd.assign(n, 0.0);
    nn::layernorm_forward(n, d, t.h, params_[b.ln2_g], params_[b.ln2_b], t.ln2, t.ln2_mean, t.ln2_rstd);
    t.fc1.assign(n * 4 * d, 0.0);
    nn::linear_forward(n, d, 4 * d, t.ln2, params_[b.fc1_w], params_[b.fc1_b], t.fc1);
    t.act.resize(t.fc1.size());
    for (std::size_t i = 0; i < t.fc1.size(); ++i) t.act[i] = nn::gelu(t.fc1[i]);
    t.fc2.assign(n * d, 0.0);
    nn::linear_forward(n, 4 * d, d, t.act, params_[b.fc2_w], params_[b.fc2_b], t.fc2);
    x = t.h;
    if (drop) {
      t.mask2.resize(n * d);
      for (double& m : t.mask2) m = dropout_rng->uniform() < cfg_.dropout ? 0.0 : keep_scale;
      for (std::size_t i = 0; i < n * d; ++i) x[i] += t.fc2[i] * t.mask2[i];
    } else {
      for (std::size_t i = 0; i < n * d; ++i) x[i] += t.fc2[i];
    }
  }

  std::vector<double> lnf(n * d, 0.0);
  nn::layernorm_forward(n, d, x, params_[lnf_g_], params_[lnf_b_], lnf, scratch_mean, scratch_rstd);
  std::vector<double> logits(n * cfg_.vocab, 0.0);
  nn::linear_forward(n, d, cfg_.vocab, lnf, params_[head_w_], params_[head_b_], logits);
  if (tape) {
    tape->x_final = std::move(x);
    tape->lnf = std::move(lnf);
    tape->lnf_mean = scratch_mean;
    tape->lnf_rstd = scratch_rstd;
  }
  return logits;
}

void Gpt::backward(const Tape& tape, std::span<const double> text, std::span<const int> tokens,
                   std::span<const double> dlogits, std::span<double> grad) const {
  const std::size_t n = tape.n;
  const std::size_t d = cfg_.model_dim;
  const std::size_t nh = cfg_.heads;
  const std::size_t dh = d / nh;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto& p = params_;

  std::vector<double> dlnf(n * d, 0.0);
  nn::linear_backward(n, d, cfg_.vocab, tape.lnf, p[head_w_], dlogits, p.in(grad, head_w_), p.in(grad, head_b_), dlnf);
  std::vector<double> dx(n * d, 0.0);
  nn::layernorm_backward(n, d, tape.x_final, p[lnf_g_], tape.lnf_mean, tape.lnf_rstd, dlnf, p.in(grad, lnf_g_),
                         p.in(grad, lnf_b_), dx);

  for (std::size_t l = blocks_.size(); l-- > 0;) {
    const Block& b = blocks_[l];
    const Tape::BlockTape& t = tape.blocks[l];
    // MLP branch.
    std::vector<double> dfc2(dx);
    if (!t.mask2.empty())
      for (std::size_t i = 0; i < dfc2.size(); ++i) dfc2[i] *= t.mask2[i];
    std::vector<double> dact(n * 4 * d, 0.0);
    nn::linear_backward(n, 4 * d, d, t.act, p[b.fc2_w], dfc2, p.in(grad, b.fc2_w), p.in(grad, b.fc2_b), dact);
    for (std::size_t i = 0; i < dact.size(); ++i) dact[i] *= nn::gelu_grad(t.fc1[i]);
    std::vector<double> dln2(n * d, 0.0);
    nn::linear_backward(n, d, 4 * d, t.ln2, p[b.fc1_w], dact, p.in(grad, b.fc1_w), p.in(grad, b.fc1_b), dln2);
    std::vector<double> dres(dx);
    nn::layernorm_backward(n, d, t.h, p[b.ln2_g], t.ln2_mean, t.ln2_rstd, dln2, p.in(grad, b.ln2_g),
                           p.in(grad, b.ln2_b), dres);
    // Attention branch.
    std::vector<double> dproj(dres);
    if (!t.mask1.empty())
      for (std::size_t i = 0; i < dproj.size(); ++i) dproj[i] *= t.mask1[i];
    std::vector<double> datt(n * d, 0.0);
    nn::linear_backward(n, d, d, t.att, p[b.proj_w], dproj, p.in(grad, b.proj_w), p.in(grad, b.proj_b), datt);
    std::vector<double> dqkv(n * 3 * d, 0.0);
    std::vector<double> dp(n);
    for (std::size_t hh = 0; hh < nh; ++hh) {
      for (std::size_t i = 0; i < n; ++i) {
        const double* pr = t.probs.data() + (hh * n + i) * n;
        const double* dout = datt.data() + i * d + hh * dh;
        double dot_sum = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const double* v = t.qkv.data() + j * 3 * d + 2 * d + hh * dh;
          dp[j] = simd::kernels().dot(dout, v, dh);
          dot_sum += pr[j] * dp[j];
          simd::kernels().axpy(pr[j], dout, dqkv.data() + j * 3 * d + 2 * d + hh * dh, dh);
        }
        const double* q = t.qkv.data() + i * 3 * d + hh * dh;
        double* dq = dqkv.data() + i * 3 * d + hh * dh;
        for (std::size_t j = 0; j <= i; ++j) {
          const double ds = pr[j] * (dp[j] - dot_sum) * inv_sqrt;
          if (ds == 0.0) continue;
          simd::kernels().axpy(ds, t.qkv.data() + j * 3 * d + d + hh * dh, dq, dh);
          simd::kernels().axpy(ds, q, dqkv.data() + j * 3 * d + d + hh * dh, dh);
        }
      }
    }
    std::vector<double> dln1(n * d, 0.0);
    nn::linear_backward(n, d, 3 * d, t.ln1, p[b.qkv_w], dqkv, p.in(grad, b.qkv_w), p.in(grad, b.qkv_b), dln1);
    dx = dres;
    nn::layernorm_backward(n, d, t.x_in, p[b.ln1_g], t.ln1_mean, t.ln1_rstd, dln1, p.in(grad, b.ln1_g),
                           p.in(grad, b.ln1_b), dx);
  }

  nn::linear_backward(1, cfg_.d_text, d, text, p[text_w_], std::span<const double>(dx).first(d), p.in(grad, text_w_),
                      p.in(grad, text_b_), {});
  auto gtok = p.in(grad, tok_emb_);
  for (std::size_t i = 1; i < n; ++i)
    simd::axpy(1.0, std::span<const double>(dx).subspan(i * d, d),
               gtok.subspan(static_cast<std::size_t>(tokens[i - 1]) * d, d));
  if (cfg_.positional == Positional::Learned)
    simd::axpy(1.0, std::span<const double>(dx), p.in(grad, pos_emb_).first(n * d));
}

TokenDistribution Gpt::next_distribution(std::span<const double> text, std::span<const int> prefix) const {
  check_inputs(text, prefix, prefix.size() + 1);
  auto logits = forward(text, prefix, nullptr, nullptr);
  TokenDistribution out;
  out.probs.assign(logits.end() - static_cast<std::ptrdiff_t>(cfg_.vocab), logits.end());
  nn::softmax_inplace(out.probs);
  return out;
}

std::vector<TokenDistribution> Gpt::all_distributions(std::span<const double> text, std::span<const int> tokens) const {
  check_inputs(text, tokens, tokens.size() + 1);
  auto logits = forward(text, tokens, nullptr, nullptr);
  std::vector<TokenDistribution> out(tokens.size() + 1);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].probs.assign(logits.begin() + static_cast<std::ptrdiff_t>(i * cfg_.vocab),
                        logits.begin() + static_cast<std::ptrdiff_t>((i + 1) * cfg_.vocab));
    nn::softmax_inplace(out[i].probs);
  }
  return out;
}

double Gpt::sequence_nll(std::span<const double> text, std::span<const int> sequence, std::span<double> grad,
                         std::size_t* correct, numerics::Prng* dropout_rng) const {
  if (sequence.empty()) throw ValidationError("gpt: empty training sequence");
  if (!grad.empty() && grad.size() != params_.size()) throw DimensionError("gpt: gradient buffer size");
  const auto inputs = sequence.first(sequence.size() - 1);
  check_inputs(text, sequence, sequence.size());
  Tape tape;
  auto logits = forward(text, inputs, grad.empty() ? nullptr : &tape, dropout_rng);
  const std::size_t v = cfg_.vocab;
  double nll = 0.0;
  std::size_t right = 0;
  std::vector<double> dlogits(grad.empty() ? 0 : logits.size());
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    std::span<double> row(logits.data() + i * v, v);
    const auto target = static_cast<std::size_t>(sequence[i]);
    const auto arg = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    if (arg == target) ++right;
    const double lse = nn::log_sum_exp(row);
    nll += lse - row[target];
    if (!grad.empty()) {
      for (std::size_t k = 0; k < v; ++k) dlogits[i * v + k] = std::exp(row[k] - lse);
      dlogits[i * v + target] -= 1.0;
    }
  }
  if (correct) *correct = right;
  if (!grad.empty()) backward(tape, text, inputs, dlogits, grad);
  return nll;
}

std::vector<int> Gpt::generate(std::span<const double> text, const Sampling& sampling, std::size_t max_tokens,
                               std::uint64_t seed) const {
  if (max_tokens > cfg_.context_len)
    throw ValidationError("gpt: max_tokens " + std::to_string(max_tokens) + " exceeds the context length");
  if (sampling.mode == Sampling::Mode::TopK && (sampling.top_k < 1 || !(sampling.temperature > 0.0)))
    throw ValidationError("gpt: top-k sampling needs top_k >= 1 and temperature > 0");
  numerics::Prng rng(seed);
  std::vector<int> out;
  while (out.size() < max_tokens) {
    check_inputs(text, out, out.size() + 1);
    auto logits = forward(text, out, nullptr, nullptr);
    std::vector<double> row(logits.end() - static_cast<std::ptrdiff_t>(cfg_.vocab), logits.end());
    int next = 0;
    if (sampling.mode == Sampling::Mode::Greedy) {
      next = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    } else {
      std::vector<int> order(row.size());
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return row[static_cast<std::size_t>(a)] > row[static_cast<std::size_t>(b)]; });
      order.resize(std::min(sampling.top_k, order.size()));
      std::vector<double> w(order.size());
      for (std::size_t i = 0; i < order.size(); ++i) w[i] = row[static_cast<std::size_t>(order[i])] / sampling.temperature;
      nn::softmax_inplace(w);
      double u = rng.uniform();
      next = order.back();
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (u < w[i]) {
          next = order[i];
          break;
        }
        u -= w[i];
      }
    }
    if (next == cfg_.end_token()) break;
    out.push_back(next);
  }
  return out;
}

std::string Gpt::serialize(const std::string& embedder_name, std::uint64_t tokenizer_hash) const {
  io::BinaryWriter w(kMagic, kVersion);
  for (std::size_t v : {cfg_.layers, cfg_.heads, cfg_.model_dim, cfg_.context_len, cfg_.vocab, cfg_.d_text}) w.u64(v);
  w.f64(cfg_.dropout);
  w.u32(cfg_.positional == Positional::Learned ? 0 : 1);
  w.string(embedder_name);
  w.u64(tokenizer_hash);
  params_.write(w);
  return w.bytes();
}

void Gpt::save(const std::filesystem::path& path, const std::string& embedder_name,
               std::uint64_t tokenizer_hash) const {
  const std::string bytes = serialize(embedder_name, tokenizer_hash);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Gpt::Loaded Gpt::deserialize(std::string bytes) {
  io::BinaryReader r(std::move(bytes), kMagic, kVersion);
  GptConfig c;
  for (std::size_t* f : {&c.layers, &c.heads, &c.model_dim, &c.context_len, &c.vocab, &c.d_text}) {
    const auto v = r.u64();
    if (v > (std::uint64_t{1} << 24)) r.fail("config value " + std::to_string(v) + " out of range");
    *f = static_cast<std::size_t>(v);
  }
  c.dropout = r.f64();
  const auto pos = r.u32();
  if (pos > 1) r.fail("unknown positional encoding " + std::to_string(pos));
  c.positional = pos == 0 ? Positional::Learned : Positional::Sinusoidal;
  try {
    c.validate();
  } catch (const ValidationError& e) {
    r.fail(e.what());
  }
  Loaded out{Gpt(c), r.string(), 0};
  out.tokenizer_hash = r.u64();
  out.model.params_.read(r);
  if (!r.done()) r.fail("trailing bytes");
  return out;
}

Gpt::Loaded Gpt::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(std::move(bytes));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void GptTrainConfig::validate() const {
  if (steps < 1) throw ValidationError("gpt training: steps must be >= 1");
  if (batch < 1) throw ValidationError("gpt training: batch must be >= 1");
  if (eval_every < 1) throw ValidationError("gpt training: eval_every must be >= 1");
  if (!(final_lr_scale > 0.0) || final_lr_scale > 1.0)
    throw ValidationError("gpt training: final_lr_scale must be in (0, 1]");
  adam.validate();
}

GptEval evaluate_gpt(const Gpt& model, std::span<const TrainingPair> data) {
  if (data.empty()) throw ValidationError("gpt eval: empty dataset");
  std::size_t right = 0, total = 0;
  double nll = 0.0;
  for (const auto& pair : data) {
    std::size_t c = 0;
    nll += model.sequence_nll(pair.text, pair.tokens, {}, &c);
    right += c;
    total += pair.tokens.size();
  }
  return {static_cast<double>(right) / static_cast<double>(total), nll / static_cast<double>(total)};
}

Gpt train_gpt(const GptConfig& cfg, const GptTrainConfig& tcfg, std::span<const TrainingPair> data,
              std::uint64_t seed, GptTrainLog* log) {
  cfg.validate();
  tcfg.validate();
  if (data.empty()) throw ValidationError("gpt training: empty dataset");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& t = data[i].tokens;
    if (t.empty() || t.back() != cfg.end_token())
      throw ValidationError("gpt training: pair " + std::to_string(i) + " does not end with the End token");
    if (t.size() > cfg.context_len)
      throw ValidationError("gpt training: pair " + std::to_string(i) + " has " + std::to_string(t.size()) +
                            " tokens, more than the context length " + std::to_string(cfg.context_len));
  }

  numerics::Prng root(seed);
  Gpt model = Gpt::random_init(cfg, root.split(1).next_u64());
  numerics::Prng batch_rng = root.split(2);
  numerics::Prng dropout_rng = root.split(3);
  // Validates tokens and text dimensions before any update.
  evaluate_gpt(model, data);

  numerics::Adam opt(model.params().size(), tcfg.adam);
  std::vector<double> grad(model.params().size());
  GptTrainLog local;
  GptTrainLog& out = log ? *log : local;
  out = {};
  for (std::size_t step = 0; step < tcfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double nll = 0.0;
    std::size_t tokens = 0;
    for (std::size_t b = 0; b < tcfg.batch; ++b) {
      const auto& pair = data[batch_rng.below(data.size())];
      nll += model.sequence_nll(pair.text, pair.tokens, grad, nullptr, cfg.dropout > 0.0 ? &dropout_rng : nullptr);
      tokens += pair.tokens.size();
    }
    const double inv = 1.0 / static_cast<double>(tokens);
    bool finite = std::isfinite(nll);
    for (double& g : grad) {
      g *= inv;
      finite = finite && std::isfinite(g);
    }
    if (!finite)
      throw DivergenceError("gpt training: non-finite loss at step " + std::to_string(step), model.serialize("", 0));

    double lr = 1.0;
    if (step < tcfg.warmup_steps) {
      lr = static_cast<double>(step + 1) / static_cast<double>(tcfg.warmup_steps);
    } else {
      const std::size_t span = tcfg.steps - tcfg.warmup_steps;
      const double p = span > 1 ? static_cast<double>(step - tcfg.warmup_steps) / static_cast<double>(span - 1) : 1.0;
      lr = tcfg.final_lr_scale + (1.0 - tcfg.final_lr_scale) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
    }
    opt.step(model.params().values(), grad, lr);

    GptLogEntry entry{step, nll * inv, -1.0};
    out.steps_run = step + 1;
    if ((step + 1) % tcfg.eval_every == 0 || step + 1 == tcfg.steps) {
      entry.train_accuracy = evaluate_gpt(model, data).accuracy;
      out.final_accuracy = entry.train_accuracy;
    }
    out.entries.push_back(entry);
    if (entry.train_accuracy >= tcfg.stop_accuracy) break;
  }
  return model;
}

}  // namespace hmx::generator
