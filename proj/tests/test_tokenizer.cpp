#include <cmath>
#include <filesystem>
#include <limits>
#include <vector>

#include "doctest.h"
#include "hmx/error.hpp"
#include "hmx/numerics/finite_diff.hpp"
#include "hmx/numerics/prng.hpp"
#include "hmx/tokenizer/datasets.hpp"
#include "hmx/tokenizer/tokenizer.hpp"

using namespace hmx::tokenizer;
using hmx::numerics::Prng;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Prng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = scale * rng.normal();
  return m;
}

TokenizerConfig tiny_config() {
  TokenizerConfig c;
  c.codebook_size = 4;
  c.code_dim = 3;
  c.window = 8;
  c.downsample = 2;
  c.input_dim = 5;
  c.root_channels = 2;
  c.hidden = 6;
  c.alpha = 0.3;
  c.beta_fd = 0.7;
  c.gamma_root = 0.4;
  return c;
}

std::size_t brute_force_nearest(const Matrix& codes, std::span<const double> z) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < codes.rows; ++n) {
    double d = 0.0;
    for (std::size_t j = 0; j < codes.cols; ++j) d += (z[j] - codes(n, j)) * (z[j] - codes(n, j));
    if (d < best_d) {
      best_d = d;
      best = n;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("encode: T=64, k=4 gives 16 latents; tokenize appends End") {
  const auto tok = Tokenizer::random_init(TokenizerConfig::action(), 3);
  Prng rng(1);
  const Matrix w = random_matrix(64, 27, rng, 0.3);
  const Matrix z = tok.encode(w);
  CHECK(z.rows == 16);
  CHECK(z.cols == 32);
  CHECK(tok.encode(w) == z);
  const auto ts = tok.tokenize(w);
  CHECK(ts.indices.size() == 17);
  CHECK(ts.indices.back() == 64);
  CHECK(ts.source_frames == 64);
  CHECK_NOTHROW(ts.validate(64));
  CHECK(tok.detokenize(ts).rows == 64);

  const Matrix longer = random_matrix(100, 27, rng);
  const auto t2 = tok.tokenize(longer);
  CHECK(t2.indices.size() == 33);
  CHECK(t2.source_frames == 128);
  CHECK_THROWS_AS(tok.encode(random_matrix(60, 27, rng)), hmx::DimensionError);
}

TEST_CASE("zero networks") {
  Tokenizer tok(TokenizerConfig::action());
  Prng rng(2);
  const Matrix z = tok.encode(random_matrix(64, 27, rng));
  for (double v : z.data) CHECK(v == 0.0);

  auto& p = tok.params();
  std::size_t out_bias = 0;
  for (std::size_t s = 0; s < p.slots().size(); ++s)
    if (p.slots()[s].name == "dec.out.b") out_bias = s;
  for (std::size_t j = 0; j < 27; ++j) p[out_bias][j] = 0.01 * static_cast<double>(j);
  const Matrix x = tok.decode_latents(random_matrix(16, 32, rng));
  REQUIRE(x.rows == 64);
  for (std::size_t t = 0; t < 64; ++t)
    for (std::size_t j = 0; j < 27; ++j) CHECK(x(t, j) == 0.01 * static_cast<double>(j));
  CHECK_THROWS_AS(tok.decode_latents(random_matrix(15, 32, rng)), hmx::DimensionError);
  std::vector<int> few(10, 0);
  CHECK_THROWS_AS(tok.decode(few), hmx::DimensionError);
}

TEST_CASE("quantize basics") {
  Codebook one{Matrix(1, 3, 0.5), {0}};
  Prng rng(4);
  const auto q1 = quantize(random_matrix(10, 3, rng), one);
  for (int i : q1.indices) CHECK(i == 0);

  Codebook cb{random_matrix(8, 3, rng), {}};
  Matrix z(1, 3);
  for (std::size_t j = 0; j < 3; ++j) z(0, j) = cb.codes(5, j);
  const auto q = quantize(z, cb);
  CHECK(q.indices[0] == 5);
  CHECK(q.quantized == z);

  Codebook empty;
  CHECK_THROWS_AS(quantize(z, empty), hmx::ValidationError);
  CHECK_THROWS_AS(quantize(Matrix(1, 4), cb), hmx::DimensionError);
}

TEST_CASE("quantize matches exhaustive scan, ties to the lowest index") {
  Prng rng(5);
  Codebook cb{random_matrix(64, 8, rng), {}};
  // Duplicated codes and an exactly equidistant pair.
  for (std::size_t j = 0; j < 8; ++j) {
    cb.codes(40, j) = cb.codes(7, j);
    cb.codes(50, j) = -cb.codes(51, j);
  }
  Matrix z = random_matrix(10000, 8, rng);
  for (std::size_t i = 0; i < 100; ++i)
    for (std::size_t j = 0; j < 8; ++j) z(i, j) = i % 2 == 0 ? cb.codes(40, j) : 0.0;
  const auto q = quantize(z, cb);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < z.rows; ++i)
    if (q.indices[i] != static_cast<int>(brute_force_nearest(cb.codes, z.row(i)))) ++mismatches;
  CHECK(mismatches == 0);
  CHECK(q.indices[0] == 7);
}

TEST_CASE("vqvae_loss closed forms") {
  TokenizerConfig cfg = TokenizerConfig::action();
  cfg.beta_fd = 2.5;
  Prng rng(6);
  const Matrix x = random_matrix(64, 27, rng);
  const Matrix z = random_matrix(16, 32, rng);
  const auto perfect = vqvae_loss(cfg, x, x, z, z);
  CHECK(perfect.total == 0.0);

  auto kcfg = TokenizerConfig::keypoint();
  const Matrix xk = random_matrix(64, 39, rng);
  const auto rooted = vqvae_loss(kcfg, xk, xk, z, z);
  double root_l1 = 0.0;
  for (std::size_t t = 0; t < 64; ++t)
    for (std::size_t j = 36; j < 39; ++j) root_l1 += std::fabs(xk(t, j));
  CHECK(rooted.total == doctest::Approx(kcfg.gamma_root * root_l1).epsilon(1e-12));

  const Matrix xc(64, 27, 0.25), xrc(64, 27, -0.5);
  const auto c = vqvae_loss(cfg, xc, xrc, z, z);
  CHECK(c.recon == doctest::Approx(64.0 * 27.0 * 0.75).epsilon(1e-12));
  CHECK(c.recon_fd == 0.0);

  const Matrix zq = random_matrix(16, 32, rng);
  auto c1 = vqvae_loss(cfg, x, xrc, z, zq);
  cfg.alpha *= 2.0;
  auto c2 = vqvae_loss(cfg, x, xrc, z, zq);
  CHECK(c2.recon == c1.recon);
  CHECK(c2.embed == c1.embed);
  CHECK(c2.total - c2.recon - c2.embed == doctest::Approx(2.0 * (c1.total - c1.recon - c1.embed)).epsilon(1e-12));
  CHECK_THROWS_AS(vqvae_loss(cfg, x, random_matrix(63, 27, rng), z, zq), hmx::DimensionError);
}

TEST_CASE("straight-through gradients match the quantization-frozen objective") {
  const TokenizerConfig cfg = tiny_config();
  auto tok = Tokenizer::random_init(cfg, 17);
  Prng rng(8);
  // Codes near encoder outputs so several codes are in use.
  std::vector<Matrix> windows;
  for (int i = 0; i < 3; ++i) windows.push_back(random_matrix(8, 5, rng));
  const Matrix z0 = tok.encode(windows[0]);
  for (std::size_t n = 0; n < 4; ++n)
    for (std::size_t j = 0; j < 3; ++j) tok.codebook().codes(n, j) = z0(n, j) + 0.05 * rng.normal();

  const auto frozen = tok.freeze(windows);
  std::vector<double> grad(tok.params().size());
  Matrix code_grad;
  const auto l = tok.loss_and_grad(windows, grad, &code_grad);
  CHECK(l.total == doctest::Approx(tok.relaxed_loss(windows, frozen)).epsilon(1e-12));

  const std::vector<double> base(tok.params().values().begin(), tok.params().values().end());
  const auto fd = hmx::numerics::finite_diff_grad(
      [&](std::span<const double> p) {
        std::copy(p.begin(), p.end(), tok.params().values().begin());
        return tok.relaxed_loss(windows, frozen);
      },
      base, 1e-6);
  std::copy(base.begin(), base.end(), tok.params().values().begin());
  CHECK(hmx::numerics::max_relative_error(grad, fd, 1e-4) < 1e-3);

  const std::vector<double> codes = tok.codebook().codes.data;
  const auto fdc = hmx::numerics::finite_diff_grad(
      [&](std::span<const double> c) {
        std::copy(c.begin(), c.end(), tok.codebook().codes.data.begin());
        return tok.relaxed_loss(windows, frozen);
      },
      codes, 1e-6);
  tok.codebook().codes.data = codes;
  CHECK(hmx::numerics::max_relative_error(code_grad.data, fdc, 1e-4) < 1e-3);
}

TEST_CASE("model file round trip") {
  const auto tok = Tokenizer::random_init(tiny_config(), 9);
  const auto path = std::filesystem::temp_directory_path() / "hmx_tok_test.uh1t";
  tok.save(path);
  const auto back = Tokenizer::load(path);
  CHECK(back.config() == tok.config());
  CHECK(back.serialize() == tok.serialize());
  for (std::size_t i = 0; i < tok.params().size(); ++i)
    CHECK(back.params().values()[i] == doctest::Approx(tok.params().values()[i]).epsilon(1e-6));
  std::string bytes = tok.serialize();
  bytes[0] = 'X';
  CHECK_THROWS_AS(Tokenizer::deserialize(bytes), hmx::ParseError);
  CHECK_THROWS_AS(Tokenizer::deserialize(tok.serialize().substr(0, 100)), hmx::ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("config validation") {
  auto c = TokenizerConfig::action();
  c.downsample = 3;
  CHECK_THROWS_AS(c.validate(), hmx::ValidationError);
  c = TokenizerConfig::action();
  c.window = 62;
  CHECK_THROWS_AS(c.validate(), hmx::ValidationError);
  c = TokenizerConfig::action();
  c.codebook_size = 1;
  CHECK_THROWS_AS(c.validate(), hmx::ValidationError);
  CHECK_NOTHROW(TokenizerConfig::full_scale().validate());
}

TEST_CASE("training is deterministic and resets never lower utilization") {
  const auto robot = hmx::body::default_robot_model();
  const auto data = sinusoid_action_dataset(robot, 12, 96, 3);
  TokenizerConfig cfg = TokenizerConfig::action();
  cfg.codebook_size = 16;
  cfg.code_dim = 8;
  cfg.hidden = 16;
  cfg.window = 32;
  TokenizerTrainConfig t;
  t.epochs = 4;
  t.steps_per_epoch = 5;
  t.batch = 4;
  TokenizerTrainLog la, lb;
  const auto a = train_tokenizer(cfg, t, data, 42, &la);
  const auto b = train_tokenizer(cfg, t, data, 42, &lb);
  CHECK(a.serialize() == b.serialize());
  REQUIRE(la.epochs.size() == 4);
  for (const auto& e : la.epochs) CHECK(std::isfinite(e.mean.total));

  CHECK_THROWS_AS(train_tokenizer(cfg, t, {}, 1), hmx::ValidationError);
  std::vector<Matrix> short_data{Matrix(10, 27)};
  CHECK_THROWS_AS(train_tokenizer(cfg, t, short_data, 1), hmx::ValidationError);
}
