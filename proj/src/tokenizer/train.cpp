#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include "hmx/error.hpp"
#include "hmx/numerics/prng.hpp"
#include "hmx/tokenizer/tokenizer.hpp"

namespace hmx::tokenizer {

void TokenizerTrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("tokenizer training: epochs must be >= 1");
  if (steps_per_epoch < 1) throw ValidationError("tokenizer training: steps_per_epoch must be >= 1");
  if (batch < 1) throw ValidationError("tokenizer training: batch must be >= 1");
  if (!(encoder_lr_scale > 0.0) || !(codebook_lr_scale > 0.0))
    throw ValidationError("tokenizer training: learning-rate scales must be > 0");
  if (!(final_lr_scale > 0.0) || final_lr_scale > 1.0)
    throw ValidationError("tokenizer training: final_lr_scale must be in (0, 1]");
  adam.validate();
}

namespace {

Matrix crop(const Matrix& seq, std::size_t start, std::size_t len) {
  Matrix w(len, seq.cols);
  std::copy_n(seq.data.begin() + static_cast<std::ptrdiff_t>(start * seq.cols), len * seq.cols, w.data.begin());
  return w;
}

std::vector<Matrix> sample_batch(std::span<const Matrix> data, std::size_t batch, std::size_t window,
                                 numerics::Prng& rng) {
  std::vector<Matrix> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const Matrix& seq = data[rng.below(data.size())];
    out.push_back(crop(seq, rng.below(seq.rows - window + 1), window));
  }
  return out;
}

std::size_t distinct_codes(const Tokenizer& tok, std::span<const Matrix> windows) {
  std::set<int> used;
  for (const Matrix& w : windows)
    for (int i : quantize(tok.encode(w), tok.codebook()).indices) used.insert(i);
  return used.size();
}

}  // namespace

Tokenizer train_tokenizer(const TokenizerConfig& cfg, const TokenizerTrainConfig& tcfg,
                          std::span<const Matrix> dataset, std::uint64_t seed, TokenizerTrainLog* log) {
  cfg.validate();
  tcfg.validate();
  if (dataset.empty()) throw ValidationError("tokenizer training: empty dataset");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (dataset[i].cols != cfg.input_dim)
      throw DimensionError("tokenizer training: sequence " + std::to_string(i) + " has " +
                           std::to_string(dataset[i].cols) + " channels, expected " + std::to_string(cfg.input_dim));
    if (dataset[i].rows < cfg.window)
      throw ValidationError("tokenizer training: sequence " + std::to_string(i) + " has " +
                            std::to_string(dataset[i].rows) + " frames, fewer than the window " +
                            std::to_string(cfg.window));
    for (double v : dataset[i].data)
      if (!std::isfinite(v)) throw ValidationError("tokenizer training: sequence " + std::to_string(i) + " is not finite");
  }

  numerics::Prng root(seed);
  Tokenizer tok = Tokenizer::random_init(cfg, root.split(1).next_u64());
  numerics::Prng batch_rng = root.split(2);
  numerics::Prng reset_rng = root.split(3);
  numerics::Prng probe_rng = root.split(4);
  const std::vector<Matrix> probe = sample_batch(dataset, std::max<std::size_t>(64, tcfg.batch), cfg.window, probe_rng);

  // Codebook starts on encoder outputs so every code begins near the data.
  {
    std::vector<std::vector<double>> pool;
    for (const Matrix& w : probe) {
      const Matrix z = tok.encode(w);
      for (std::size_t i = 0; i < z.rows; ++i) pool.emplace_back(z.row(i).begin(), z.row(i).end());
    }
    auto& codes = tok.codebook().codes;
    for (std::size_t n = 0; n < codes.rows; ++n) {
      const auto& src = pool[reset_rng.below(pool.size())];
      for (std::size_t j = 0; j < codes.cols; ++j) codes(n, j) = src[j] + 1e-3 * reset_rng.normal();
    }
  }

  const std::size_t n_enc = tok.encoder_param_count();
  numerics::Adam enc_opt(n_enc, tcfg.adam);
  numerics::Adam dec_opt(tok.params().size() - n_enc, tcfg.adam);
  numerics::Adam code_opt(tok.codebook().codes.data.size(), tcfg.adam);
  std::vector<double> grad(tok.params().size());
  Matrix code_grad;
  std::vector<std::vector<int>> assign;
  const std::size_t total_steps = tcfg.epochs * tcfg.steps_per_epoch;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
    std::vector<std::int64_t> usage(cfg.codebook_size, 0);
    LossComponents mean;
    std::vector<Matrix> last_batch;
    for (std::size_t s = 0; s < tcfg.steps_per_epoch; ++s, ++step) {
      auto batch = sample_batch(dataset, tcfg.batch, cfg.window, batch_rng);
      const LossComponents l = tok.loss_and_grad(batch, grad, &code_grad, &assign);
      bool finite = std::isfinite(l.total);
      for (double g : grad) finite = finite && std::isfinite(g);
      if (!finite)
        throw DivergenceError("tokenizer training: non-finite loss at epoch " + std::to_string(epoch) + " step " +
                                  std::to_string(s),
                              tok.serialize());
      for (const auto& a : assign)
        for (int i : a) ++usage[static_cast<std::size_t>(i)];
      const double p = total_steps > 1 ? static_cast<double>(step) / static_cast<double>(total_steps - 1) : 0.0;
      const double lr = tcfg.final_lr_scale + (1.0 - tcfg.final_lr_scale) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
      const std::span<double> values = tok.params().values();
      const std::span<const double> g(grad);
      enc_opt.step(values.first(n_enc), g.first(n_enc), lr * tcfg.encoder_lr_scale);
      dec_opt.step(values.subspan(n_enc), g.subspan(n_enc), lr);
      code_opt.step(tok.codebook().codes.data, code_grad.data, lr * tcfg.codebook_lr_scale);
      mean.recon_l1 += l.recon_l1;
      mean.recon_fd += l.recon_fd;
      mean.recon_root += l.recon_root;
      mean.recon += l.recon;
      mean.embed += l.embed;
      mean.commit += l.commit;
      mean.total += l.total;
      last_batch = std::move(batch);
    }
    const double inv = 1.0 / static_cast<double>(tcfg.steps_per_epoch);
    for (double* f : {&mean.recon_l1, &mean.recon_fd, &mean.recon_root, &mean.recon, &mean.embed, &mean.commit,
                      &mean.total})
      *f *= inv;

    TokenizerEpochLog entry;
    entry.epoch = epoch;
    entry.mean = mean;
    std::size_t used = 0;
    for (auto u : usage) used += u > 0 ? 1 : 0;
    entry.utilization = static_cast<double>(used) / static_cast<double>(cfg.codebook_size);
    tok.codebook().usage_counts = usage;

    if (tcfg.reset_dead_codes && used < cfg.codebook_size && epoch + 1 < tcfg.epochs) {
      const std::size_t before = distinct_codes(tok, probe);
      const Matrix saved = tok.codebook().codes;
      std::vector<std::vector<double>> pool;
      for (const Matrix& w : last_batch) {
        const Matrix z = tok.encode(w);
        for (std::size_t i = 0; i < z.rows; ++i) pool.emplace_back(z.row(i).begin(), z.row(i).end());
      }
      std::size_t reset = 0;
      for (std::size_t n = 0; n < cfg.codebook_size; ++n) {
        if (usage[n] > 0) continue;
        const auto& src = pool[reset_rng.below(pool.size())];
        std::copy(src.begin(), src.end(), tok.codebook().codes.row(n).begin());
        ++reset;
      }
      if (distinct_codes(tok, probe) < before) {
        tok.codebook().codes = saved;
        reset = 0;
      }
      entry.codes_reset = reset;
    }
    if (log) log->epochs.push_back(entry);
  }
  return tok;
}

double reconstruction_l1(const Tokenizer& tok, std::span<const Matrix> dataset) {
  const auto& cfg = tok.config();
  double sum = 0.0;
  std::size_t count = 0;
  for (const Matrix& seq : dataset) {
    if (seq.cols != cfg.input_dim) throw DimensionError("reconstruction_l1: channel count mismatch");
    for (std::size_t start = 0; start + cfg.window <= seq.rows; start += cfg.window) {
      const Matrix w = crop(seq, start, cfg.window);
      const Matrix xr = tok.decode(quantize(tok.encode(w), tok.codebook()).indices);
      for (std::size_t i = 0; i < w.data.size(); ++i) sum += std::fabs(w.data[i] - xr.data[i]);
      count += w.data.size();
    }
  }
  if (count == 0) throw ValidationError("reconstruction_l1: no complete window in the dataset");
  return sum / static_cast<double>(count);
}

}  // namespace hmx::tokenizer
