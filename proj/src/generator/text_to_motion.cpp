#include "hmx/generator/text_to_motion.hpp"

#include <cmath>
#include <string>

#include "hmx/error.hpp"
#include "hmx/generator/text_embedder.hpp"

namespace hmx::generator {

using retarget::Matrix;

std::string_view mode_name(MotionMode m) noexcept { return m == MotionMode::Keypoint ? "keypoint" : "action"; }

MotionMode parse_mode(std::string_view s) {
  if (s == "keypoint") return MotionMode::Keypoint;
  if (s == "action") return MotionMode::Action;
  throw ValidationError("unknown mode '" + std::string(s) + "' (expected keypoint or action)");
}

namespace {

numerics::Vec3 hip_mid(const retarget::KeypointFrame& f) { return 0.5 * (f[0] + f[1]); }

}  // namespace

Matrix keypoint_features(const retarget::KeypointSequence& seq) {
  const std::size_t n = seq.frames();
  if (n < 2) throw ValidationError("keypoint features: need at least 2 frames");
  if (!(seq.fps > 0.0)) throw ValidationError("keypoint features: fps must be positive");
  Matrix out(n, kKeypointFeatureDim);
  for (std::size_t t = 0; t < n; ++t) {
    const auto& f = seq.positions[t];
    const numerics::Vec3 root = hip_mid(f);
    for (std::size_t k = 0; k < body::kKeypointCount; ++k)
      for (int a = 0; a < 3; ++a) out(t, 3 * k + static_cast<std::size_t>(a)) = f[k][a] - root[a];
    const std::size_t prev = t == 0 ? 0 : t - 1;
    const std::size_t cur = t == 0 ? 1 : t;
    const numerics::Vec3 v = (hip_mid(seq.positions[cur]) - hip_mid(seq.positions[prev])) * seq.fps;
    for (int a = 0; a < 3; ++a) out(t, 36 + static_cast<std::size_t>(a)) = v[a];
  }
  for (double v : out.data)
    if (!std::isfinite(v)) throw ValidationError("keypoint features: non-finite keypoints");
  return out;
}

retarget::KeypointSequence keypoints_from_features(const Matrix& features, const numerics::Vec3& start_root,
                                                   double fps) {
  if (features.cols != kKeypointFeatureDim)
    throw DimensionError("keypoint features: expected 39 channels, got " + std::to_string(features.cols));
  if (!(fps > 0.0)) throw ValidationError("keypoint features: fps must be positive");
  retarget::KeypointSequence seq;
  seq.fps = fps;
  seq.positions.resize(features.rows);
  numerics::Vec3 root = start_root;
  for (std::size_t t = 0; t < features.rows; ++t) {
    if (t > 0) root += numerics::Vec3(features(t, 36), features(t, 37), features(t, 38)) / fps;
    for (std::size_t k = 0; k < body::kKeypointCount; ++k)
      seq.positions[t][k] = root + numerics::Vec3(features(t, 3 * k), features(t, 3 * k + 1), features(t, 3 * k + 2));
  }
  return seq;
}

GeneratedMotion text_to_motion(std::string_view text, MotionMode mode, const MotionModels& models,
                               const Sampling& sampling, std::size_t max_tokens, std::uint64_t seed,
                               const numerics::Vec3& start_root) {
  if (!models.tokenizer || !models.gpt) throw ValidationError("text_to_motion: tokenizer and generator are required");
  const auto& tok = *models.tokenizer;
  const auto& gpt = *models.gpt;
  const auto& tcfg = tok.config();
  const std::size_t want_dim = mode == MotionMode::Keypoint ? kKeypointFeatureDim : body::kRobotDofCount;
  if (tcfg.input_dim != want_dim)
    throw ValidationError("text_to_motion: " + std::string(mode_name(mode)) + " mode needs a " +
                          std::to_string(want_dim) + "-channel tokenizer, got " + std::to_string(tcfg.input_dim));
  if (models.tokenizer_hash != tok.content_hash())
    throw ValidationError("text_to_motion: generator was trained against a different tokenizer");
  if (gpt.config().vocab != tcfg.codebook_size + 1)
    throw ValidationError("text_to_motion: generator vocabulary " + std::to_string(gpt.config().vocab) +
                          " does not match codebook size " + std::to_string(tcfg.codebook_size) + " + End");
  const auto embedder = make_text_embedder(models.embedder_name);
  if (embedder->dim() != gpt.config().d_text)
    throw ValidationError("text_to_motion: embedder dimension does not match the generator");

  GeneratedMotion out;
  out.mode = mode;
  out.tokens = gpt.generate(embedder->embed(text), sampling, max_tokens, seed);
  const std::size_t per = tcfg.latent_len();
  const std::size_t whole = out.tokens.size() / per * per;
  out.dropped_tokens = out.tokens.size() - whole;

  Matrix decoded(0, tcfg.input_dim);
  if (whole > 0) {
    tokenizer::TokenSequence seq;
    seq.indices.assign(out.tokens.begin(), out.tokens.begin() + static_cast<std::ptrdiff_t>(whole));
    seq.indices.push_back(static_cast<int>(tcfg.codebook_size));
    seq.source_frames = whole / per * tcfg.window;
    decoded = tok.detokenize(seq);
  }
  if (mode == MotionMode::Action) {
    retarget::ActionSequence a;
    a.q = std::move(decoded);
    out.actions = std::move(a);
  } else {
    out.keypoints = keypoints_from_features(decoded, start_root);
  }
  return out;
}

}  // namespace hmx::generator
