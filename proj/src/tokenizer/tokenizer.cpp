#include "hmx/tokenizer/tokenizer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <numbers>

#include "hmx/error.hpp"
#include "hmx/io/binary.hpp"
#include "hmx/numerics/prng.hpp"
#include "hmx/simd/kernels.hpp"

namespace hmx::tokenizer {

namespace {

constexpr std::string_view kMagic = "UH1T";
constexpr std::uint32_t kVersion = 1;

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void check_finite(const Matrix& m, const char* what) {
  for (double v : m.data)
    if (!std::isfinite(v)) throw ValidationError(std::string(what) + ": non-finite value");
}

}  // namespace

TokenizerConfig TokenizerConfig::action() { return TokenizerConfig{}; }

TokenizerConfig TokenizerConfig::keypoint() {
  TokenizerConfig c;
  c.input_dim = 39;
  c.root_channels = 3;
  c.gamma_root = 1.0;
  return c;
}

TokenizerConfig TokenizerConfig::full_scale() {
  TokenizerConfig c;
  c.codebook_size = 2048;
  c.code_dim = 512;
  c.hidden = 512;
  return c;
}

std::size_t TokenizerConfig::stages() const noexcept {
  return static_cast<std::size_t>(std::countr_zero(downsample));
}

void TokenizerConfig::validate() const {
  if (codebook_size < 2) throw ValidationError("tokenizer config: codebook_size must be >= 2");
  if (code_dim < 1) throw ValidationError("tokenizer config: code_dim must be >= 1");
  if (downsample < 1 || !std::has_single_bit(downsample))
    throw ValidationError("tokenizer config: downsample must be a power of two");
  if (window < downsample || window % downsample != 0)
    throw ValidationError("tokenizer config: window must be a positive multiple of downsample");
  if (input_dim < 1) throw ValidationError("tokenizer config: input_dim must be >= 1");
  if (root_channels > input_dim) throw ValidationError("tokenizer config: root_channels exceeds input_dim");
  if (hidden < 1) throw ValidationError("tokenizer config: hidden must be >= 1");
  for (double w : {alpha, beta_fd, gamma_root})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("tokenizer config: loss weights must be >= 0");
}

QuantizeResult quantize(const Matrix& latents, const Codebook& codebook) {
  const auto& codes = codebook.codes;
  if (codes.rows == 0) throw ValidationError("quantize: empty codebook");
  if (latents.cols != codes.cols)
    throw DimensionError("quantize: latent dim " + std::to_string(latents.cols) + " != code dim " +
                         std::to_string(codes.cols));
  QuantizeResult out;
  out.indices.resize(latents.rows);
  out.quantized = Matrix(latents.rows, codes.cols);
  for (std::size_t i = 0; i < latents.rows; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t n = 0; n < codes.rows; ++n) {
      const double d = simd::squared_distance(latents.row(i), codes.row(n));
      if (d < best) {
        best = d;
        arg = n;
      }
    }
    out.indices[i] = static_cast<int>(arg);
    std::copy(codes.row(arg).begin(), codes.row(arg).end(), out.quantized.row(i).begin());
  }
  return out;
}

void TokenSequence::validate(std::size_t codebook_size) const {
  if (indices.empty() || indices.back() != static_cast<int>(codebook_size))
    throw ValidationError("token sequence: must end with the End marker");
  for (std::size_t i = 0; i + 1 < indices.size(); ++i)
    if (indices[i] < 0 || indices[i] >= static_cast<int>(codebook_size))
      throw ValidationError("token sequence: index " + std::to_string(indices[i]) + " at position " +
                            std::to_string(i) + " outside [0, N)");
}

LossComponents vqvae_loss(const TokenizerConfig& cfg, const Matrix& x, const Matrix& xr, const Matrix& z,
                          const Matrix& zq) {
  if (x.rows != xr.rows || x.cols != xr.cols) throw DimensionError("vqvae_loss: original/reconstruction shape mismatch");
  if (z.rows != zq.rows || z.cols != zq.cols) throw DimensionError("vqvae_loss: latent shape mismatch");
  if (x.cols != cfg.input_dim) throw DimensionError("vqvae_loss: input has wrong channel count");
  LossComponents l;
  const std::size_t c = x.cols;
  const std::size_t root0 = c - cfg.root_channels;
  for (std::size_t t = 0; t < x.rows; ++t) {
    for (std::size_t j = 0; j < c; ++j) {
      l.recon_l1 += std::fabs(x(t, j) - xr(t, j));
      if (t + 1 < x.rows) l.recon_fd += std::fabs((x(t + 1, j) - x(t, j)) - (xr(t + 1, j) - xr(t, j)));
      if (j >= root0) l.recon_root += std::fabs(xr(t, j));
    }
  }
  l.recon = l.recon_l1 + cfg.beta_fd * l.recon_fd + cfg.gamma_root * l.recon_root;
  l.embed = std::sqrt(simd::squared_distance(z.data, zq.data));
  l.commit = l.embed;
  l.total = l.recon + l.embed + cfg.alpha * l.commit;
  return l;
}

Tokenizer::Tokenizer(TokenizerConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  build();
}

void Tokenizer::build() {
  const std::size_t h = cfg_.hidden;
  encoder_ = nn::ConvStack(cfg_.input_dim);
  encoder_.conv(params_, "enc.in", h, 3, 1, 1);
  encoder_.relu();
  for (std::size_t s = 0; s < cfg_.stages(); ++s) {
    const std::string p = "enc.stage" + std::to_string(s);
    encoder_.conv(params_, p + ".down", h, 4, 2, 1);
    encoder_.resblock(params_, p + ".res");
  }
  encoder_.conv(params_, "enc.out", cfg_.code_dim, 3, 1, 1);
  encoder_.norm();
  encoder_params_ = params_.size();

  decoder_ = nn::ConvStack(cfg_.code_dim);
  decoder_.conv(params_, "dec.in", h, 3, 1, 1);
  decoder_.relu();
  for (std::size_t s = 0; s < cfg_.stages(); ++s) {
    const std::string p = "dec.stage" + std::to_string(s);
    decoder_.resblock(params_, p + ".res");
    decoder_.upsample2();
    decoder_.conv(params_, p + ".up", h, 3, 1, 1);
  }
  decoder_.relu();
  decoder_.conv(params_, "dec.out", cfg_.input_dim, 3, 1, 1);

  codebook_.codes = Matrix(cfg_.codebook_size, cfg_.code_dim);
  codebook_.usage_counts.assign(cfg_.codebook_size, 0);
}

Tokenizer Tokenizer::random_init(TokenizerConfig cfg, std::uint64_t seed) {
  Tokenizer t(cfg);
  numerics::Prng rng(seed);
  auto enc_rng = rng.split(1);
  auto dec_rng = rng.split(2);
  auto code_rng = rng.split(3);
  t.encoder_.init(t.params_, enc_rng);
  t.decoder_.init(t.params_, dec_rng);
  for (double& v : t.codebook_.codes.data) v = code_rng.uniform(-1.0, 1.0) / static_cast<double>(cfg.codebook_size);
  return t;
}

Matrix Tokenizer::encode(const Matrix& window) const {
  if (window.rows != cfg_.window || window.cols != cfg_.input_dim)
    throw DimensionError("encode: window must be " + std::to_string(cfg_.window) + " x " +
                         std::to_string(cfg_.input_dim) + ", got " + std::to_string(window.rows) + " x " +
                         std::to_string(window.cols));
  Matrix z(cfg_.latent_len(), cfg_.code_dim);
  z.data = encoder_.forward(params_, window.data, window.rows, nullptr);
  return z;
}

Matrix Tokenizer::decode_latents(const Matrix& zq) const {
  if (zq.rows != cfg_.latent_len() || zq.cols != cfg_.code_dim)
    throw DimensionError("decode: expected " + std::to_string(cfg_.latent_len()) + " x " +
                         std::to_string(cfg_.code_dim) + " latents, got " + std::to_string(zq.rows) + " x " +
                         std::to_string(zq.cols));
  Matrix x(cfg_.window, cfg_.input_dim);
  x.data = decoder_.forward(params_, zq.data, zq.rows, nullptr);
  return x;
}

Matrix Tokenizer::decode(std::span<const int> indices) const {
  if (indices.size() != cfg_.latent_len())
    throw DimensionError("decode: expected " + std::to_string(cfg_.latent_len()) + " indices, got " +
                         std::to_string(indices.size()));
  Matrix zq(indices.size(), cfg_.code_dim);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= static_cast<int>(cfg_.codebook_size))
      throw ValidationError("decode: token " + std::to_string(indices[i]) + " outside the codebook");
    const auto src = codebook_.codes.row(static_cast<std::size_t>(indices[i]));
    std::copy(src.begin(), src.end(), zq.row(i).begin());
  }
  return decode_latents(zq);
}

TokenSequence Tokenizer::tokenize(const Matrix& seq) const {
  if (seq.rows == 0) throw ValidationError("tokenize: empty sequence");
  if (seq.cols != cfg_.input_dim)
    throw DimensionError("tokenize: sequence has " + std::to_string(seq.cols) + " channels, expected " +
                         std::to_string(cfg_.input_dim));
  check_finite(seq, "tokenize");
  const std::size_t windows = (seq.rows + cfg_.window - 1) / cfg_.window;
  TokenSequence out;
  out.source_frames = windows * cfg_.window;
  Matrix w(cfg_.window, cfg_.input_dim);
  for (std::size_t i = 0; i < windows; ++i) {
    for (std::size_t t = 0; t < cfg_.window; ++t) {
      const std::size_t src = std::min(i * cfg_.window + t, seq.rows - 1);
      std::copy(seq.row(src).begin(), seq.row(src).end(), w.row(t).begin());
    }
    const auto q = quantize(encode(w), codebook_);
    out.indices.insert(out.indices.end(), q.indices.begin(), q.indices.end());
  }
  out.indices.push_back(static_cast<int>(cfg_.codebook_size));
  return out;
}

Matrix Tokenizer::detokenize(const TokenSequence& tokens) const {
  tokens.validate(cfg_.codebook_size);
  const auto body = tokens.body();
  const std::size_t per = cfg_.latent_len();
  if (body.empty() || body.size() % per != 0)
    throw DimensionError("detokenize: token count " + std::to_string(body.size()) + " is not a positive multiple of " +
                         std::to_string(per));
  const std::size_t windows = body.size() / per;
  Matrix out(windows * cfg_.window, cfg_.input_dim);
  for (std::size_t i = 0; i < windows; ++i) {
    const Matrix x = decode(body.subspan(i * per, per));
    std::copy(x.data.begin(), x.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * x.data.size()));
  }
  return out;
}

LossComponents Tokenizer::window_loss(const Matrix& x, const std::vector<int>* frozen_idx, const Matrix* z0,
                                      const Matrix* zq0, std::span<double> grad, Matrix* code_grad,
                                      std::vector<int>* assignment) const {
  if (x.rows != cfg_.window || x.cols != cfg_.input_dim)
    throw DimensionError("tokenizer loss: window must be " + std::to_string(cfg_.window) + " x " +
                         std::to_string(cfg_.input_dim));
  const bool want_grad = !grad.empty();
  nn::ConvStack::Tape enc_tape, dec_tape;
  Matrix z(cfg_.latent_len(), cfg_.code_dim);
  z.data = encoder_.forward(params_, x.data, x.rows, want_grad ? &enc_tape : nullptr);

  std::vector<int> idx;
  Matrix dec_in, zq_commit, z_embed, zq_embed;
  if (frozen_idx) {
    idx = *frozen_idx;
    zq_embed = Matrix(z.rows, z.cols);
    for (std::size_t i = 0; i < z.rows; ++i) {
      const auto c = codebook_.codes.row(static_cast<std::size_t>(idx[i]));
      std::copy(c.begin(), c.end(), zq_embed.row(i).begin());
    }
    dec_in = z;
    for (std::size_t i = 0; i < dec_in.data.size(); ++i) dec_in.data[i] += zq0->data[i] - z0->data[i];
    zq_commit = *zq0;
    z_embed = *z0;
  } else {
    auto q = quantize(z, codebook_);
    idx = std::move(q.indices);
    dec_in = q.quantized;
    zq_commit = q.quantized;
    zq_embed = std::move(q.quantized);
    z_embed = z;
  }
  if (assignment) *assignment = idx;

  Matrix xr(cfg_.window, cfg_.input_dim);
  xr.data = decoder_.forward(params_, dec_in.data, dec_in.rows, want_grad ? &dec_tape : nullptr);

  LossComponents l = vqvae_loss(cfg_, x, xr, z, zq_commit);
  l.embed = std::sqrt(simd::squared_distance(z_embed.data, zq_embed.data));
  l.total = l.recon + l.embed + cfg_.alpha * l.commit;

  if (want_grad) {
    const std::size_t c = x.cols;
    const std::size_t root0 = c - cfg_.root_channels;
    std::vector<double> dxr(xr.data.size(), 0.0);
    for (std::size_t t = 0; t < x.rows; ++t) {
      for (std::size_t j = 0; j < c; ++j) {
        dxr[t * c + j] += sign(xr(t, j) - x(t, j));
        if (t + 1 < x.rows) {
          const double s = cfg_.beta_fd * sign((xr(t + 1, j) - xr(t, j)) - (x(t + 1, j) - x(t, j)));
          dxr[(t + 1) * c + j] += s;
          dxr[t * c + j] -= s;
        }
        if (j >= root0) dxr[t * c + j] += cfg_.gamma_root * sign(xr(t, j));
      }
    }
    // Straight-through: the decoder-input gradient is copied onto Z.
    std::vector<double> dz = decoder_.backward(params_, dec_tape, dxr, grad);
    if (l.commit > 0.0) {
      const double s = cfg_.alpha / l.commit;
      for (std::size_t i = 0; i < dz.size(); ++i) dz[i] += s * (z.data[i] - zq_commit.data[i]);
    }
    encoder_.backward(params_, enc_tape, dz, grad);
    if (code_grad && l.embed > 0.0) {
      for (std::size_t i = 0; i < z.rows; ++i) {
        auto g = code_grad->row(static_cast<std::size_t>(idx[i]));
        for (std::size_t j = 0; j < z.cols; ++j) g[j] += (zq_embed(i, j) - z_embed(i, j)) / l.embed;
      }
    }
  }
  return l;
}

namespace {

void accumulate(LossComponents& a, const LossComponents& b) {
  a.recon_l1 += b.recon_l1;
  a.recon_fd += b.recon_fd;
  a.recon_root += b.recon_root;
  a.recon += b.recon;
  a.embed += b.embed;
  a.commit += b.commit;
  a.total += b.total;
}

void scale(LossComponents& a, double s) {
  a.recon_l1 *= s;
  a.recon_fd *= s;
  a.recon_root *= s;
  a.recon *= s;
  a.embed *= s;
  a.commit *= s;
  a.total *= s;
}

}  // namespace

LossComponents Tokenizer::loss_and_grad(std::span<const Matrix> windows, std::span<double> grad, Matrix* code_grad,
                                        std::vector<std::vector<int>>* assignments) const {
  if (windows.empty()) throw ValidationError("tokenizer loss: no windows");
  if (!grad.empty() && grad.size() != params_.size()) throw DimensionError("tokenizer loss: gradient buffer size");
  std::fill(grad.begin(), grad.end(), 0.0);
  if (code_grad) *code_grad = Matrix(cfg_.codebook_size, cfg_.code_dim);
  if (assignments) assignments->assign(windows.size(), {});
  LossComponents sum;
  for (std::size_t i = 0; i < windows.size(); ++i)
    accumulate(sum, window_loss(windows[i], nullptr, nullptr, nullptr, grad, code_grad,
                                assignments ? &(*assignments)[i] : nullptr));
  const double inv = 1.0 / static_cast<double>(windows.size());
  scale(sum, inv);
  for (double& g : grad) g *= inv;
  if (code_grad)
    for (double& g : code_grad->data) g *= inv;
  return sum;
}

FrozenQuantization Tokenizer::freeze(std::span<const Matrix> windows) const {
  FrozenQuantization f;
  for (const Matrix& w : windows) {
    Matrix z = encode(w);
    auto q = quantize(z, codebook_);
    f.indices.push_back(std::move(q.indices));
    f.z0.push_back(std::move(z));
    f.zq0.push_back(std::move(q.quantized));
  }
  return f;
}

double Tokenizer::relaxed_loss(std::span<const Matrix> windows, const FrozenQuantization& frozen) const {
  if (frozen.indices.size() != windows.size()) throw DimensionError("relaxed loss: frozen state size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i)
    sum += window_loss(windows[i], &frozen.indices[i], &frozen.z0[i], &frozen.zq0[i], {}, nullptr, nullptr).total;
  return sum / static_cast<double>(windows.size());
}

std::string Tokenizer::serialize() const {
  io::BinaryWriter w(kMagic, kVersion);
  for (std::size_t v : {cfg_.codebook_size, cfg_.code_dim, cfg_.downsample, cfg_.window, cfg_.input_dim,
                        cfg_.root_channels, cfg_.hidden})
    w.u64(v);
  w.f64(cfg_.alpha);
  w.f64(cfg_.beta_fd);
  w.f64(cfg_.gamma_root);
  w.f32_array(codebook_.codes.data);
  w.i64_array(codebook_.usage_counts);
  params_.write(w);
  return w.bytes();
}

void Tokenizer::save(const std::filesystem::path& path) const {
  const std::string bytes = serialize();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

Tokenizer Tokenizer::deserialize(std::string bytes) {
  io::BinaryReader r(std::move(bytes), kMagic, kVersion);
  TokenizerConfig c;
  for (std::size_t* f : {&c.codebook_size, &c.code_dim, &c.downsample, &c.window, &c.input_dim, &c.root_channels,
                         &c.hidden}) {
    const auto v = r.u64();
    if (v > (std::uint64_t{1} << 24)) r.fail("config value " + std::to_string(v) + " out of range");
    *f = static_cast<std::size_t>(v);
  }
  c.alpha = r.f64();
  c.beta_fd = r.f64();
  c.gamma_root = r.f64();
  try {
    c.validate();
  } catch (const ValidationError& e) {
    r.fail(e.what());
  }
  Tokenizer t(c);
  auto codes = r.f32_array();
  if (codes.size() != c.codebook_size * c.code_dim) r.fail("codebook has wrong size");
  t.codebook_.codes.data = std::move(codes);
  auto usage = r.i64_array();
  if (usage.size() != c.codebook_size) r.fail("usage counts have wrong size");
  t.codebook_.usage_counts = std::move(usage);
  t.params_.read(r);
  if (!r.done()) r.fail("trailing bytes");
  return t;
}

Tokenizer Tokenizer::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(std::move(bytes));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::uint64_t Tokenizer::content_hash() const { return numerics::fnv1a64(serialize()); }

}  // namespace hmx::tokenizer
