// Command-line front end. Exit codes: 0 success, 1 handled failure, 2 usage.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hmx/body/human_model.hpp"
#include "hmx/body/robot_model.hpp"
#include "hmx/control/rollout.hpp"
#include "hmx/error.hpp"
#include "hmx/generator/gpt.hpp"
#include "hmx/generator/text_embedder.hpp"
#include "hmx/generator/text_to_motion.hpp"
#include "hmx/io/config.hpp"
#include "hmx/io/sample_file.hpp"
#include "hmx/metrics/metrics.hpp"
#include "hmx/pipeline/pipeline.hpp"
#include "hmx/policy/env.hpp"
#include "hmx/retarget/retarget.hpp"
#include "hmx/tokenizer/datasets.hpp"
#include "hmx/tokenizer/tokenizer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace hmx;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Keys outside every known section, or unread keys in the command's own
// sections, are errors.
void reject_unused(const io::Config& c, std::initializer_list<std::string_view> own) {
  c.reject_unused(own, {"retarget.", "tokenizer.", "gpt.", "policy.", "ppo.", "plant.", "pipeline."});
}

struct Globals {
  std::uint64_t seed = 0;
  std::string config_path;
  bool quiet = false;
  io::Config config;

  std::ostream& log() const {
    static std::ostringstream sink;
    sink.str("");
    return quiet ? static_cast<std::ostream&>(sink) : std::cout;
  }
};

body::HumanBodyModel load_human(const std::string& path) {
  return path.empty() ? body::default_human_model() : body::HumanBodyModel::load(path);
}

body::RobotModel load_robot(const std::string& path) {
  return path.empty() ? body::default_robot_model() : body::RobotModel::load(path);
}

// Sample files in a directory (sorted by name), or the single file given.
std::vector<fs::path> sample_paths(const fs::path& p) {
  std::vector<fs::path> out;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::directory_iterator(p))
      if (e.is_regular_file() && e.path().extension() == ".hmx") out.push_back(e.path());
    std::sort(out.begin(), out.end());
  } else if (fs::exists(p)) {
    out.push_back(p);
  }
  if (out.empty()) throw ValidationError("no .hmx sample files at " + p.string());
  return out;
}

retarget::IkConfig ik_config(const io::Config& c) {
  retarget::IkConfig ik;
  ik.lambda_smooth = c.number("retarget.ik.lambda_smooth", ik.lambda_smooth);
  ik.max_iters = static_cast<int>(c.count("retarget.ik.max_iters", static_cast<std::size_t>(ik.max_iters)));
  ik.adam.learning_rate = c.number("retarget.ik.learning_rate", ik.adam.learning_rate);
  ik.convergence_tol = c.number("retarget.ik.convergence_tol", ik.convergence_tol);
  ik.validate();
  return ik;
}

tokenizer::TokenizerConfig tokenizer_config(const io::Config& c, generator::MotionMode mode) {
  auto t = mode == generator::MotionMode::Action ? tokenizer::TokenizerConfig::action()
                                                 : tokenizer::TokenizerConfig::keypoint();
  t.codebook_size = c.count("tokenizer.codebook_size", t.codebook_size);
  t.code_dim = c.count("tokenizer.code_dim", t.code_dim);
  t.downsample = c.count("tokenizer.downsample", t.downsample);
  t.window = c.count("tokenizer.window", t.window);
  t.hidden = c.count("tokenizer.hidden", t.hidden);
  t.alpha = c.number("tokenizer.alpha", t.alpha);
  t.beta_fd = c.number("tokenizer.beta_fd", t.beta_fd);
  t.gamma_root = c.number("tokenizer.gamma_root", t.gamma_root);
  return t;
}

tokenizer::TokenizerTrainConfig tokenizer_train_config(const io::Config& c) {
  tokenizer::TokenizerTrainConfig t;
  t.epochs = c.count("tokenizer.train.epochs", t.epochs);
  t.steps_per_epoch = c.count("tokenizer.train.steps_per_epoch", t.steps_per_epoch);
  t.batch = c.count("tokenizer.train.batch", t.batch);
  t.adam.learning_rate = c.number("tokenizer.train.learning_rate", t.adam.learning_rate);
  t.final_lr_scale = c.number("tokenizer.train.final_lr_scale", t.final_lr_scale);
  t.encoder_lr_scale = c.number("tokenizer.train.encoder_lr_scale", t.encoder_lr_scale);
  t.codebook_lr_scale = c.number("tokenizer.train.codebook_lr_scale", t.codebook_lr_scale);
  t.reset_dead_codes = c.flag("tokenizer.train.reset_dead_codes", t.reset_dead_codes);
  return t;
}

control::PlantConfig plant_config(const io::Config& c) {
  control::PlantConfig p;
  p.dt = c.number("plant.dt", p.dt);
  p.substeps = c.count("plant.substeps", p.substeps);
  p.ground_stiffness = c.number("plant.ground_stiffness", p.ground_stiffness);
  p.ground_damping = c.number("plant.ground_damping", p.ground_damping);
  p.tangential_damping = c.number("plant.tangential_damping", p.tangential_damping);
  p.contact_force_threshold = c.number("plant.contact_force_threshold", p.contact_force_threshold);
  p.collision_radius = c.number("plant.collision_radius", p.collision_radius);
  p.validate();
  return p;
}

std::vector<std::size_t> parse_sizes(const std::string& s, const char* key) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size() || v == 0) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ValidationError(std::string(key) + ": expected comma-separated positive sizes, got '" + s + "'");
    }
  }
  if (out.empty()) throw ValidationError(std::string(key) + ": empty");
  return out;
}

policy::PpoConfig ppo_config(const io::Config& c) {
  policy::PpoConfig p;
  p.gamma = c.number("ppo.gamma", p.gamma);
  p.gae_lambda = c.number("ppo.gae_lambda", p.gae_lambda);
  p.rollout_len = c.count("ppo.rollout_len", p.rollout_len);
  p.epochs_per_rollout = c.count("ppo.epochs_per_rollout", p.epochs_per_rollout);
  p.minibatches = c.count("ppo.minibatches", p.minibatches);
  p.entropy_coef = c.number("ppo.entropy_coef", p.entropy_coef);
  p.value_coef = c.number("ppo.value_coef", p.value_coef);
  p.clip = c.number("ppo.clip", p.clip);
  p.learning_rate = c.number("ppo.learning_rate", p.learning_rate);
  p.num_envs = c.count("ppo.num_envs", p.num_envs);
  p.reward_normalization = c.flag("ppo.reward_normalization", p.reward_normalization);
  p.max_grad_norm = c.number("ppo.max_grad_norm", p.max_grad_norm);
  p.validate();
  return p;
}

// IK on generated or decoded keypoints; roots follow the hip midpoint.
retarget::RobotMotion robot_motion_from_keypoints(const retarget::KeypointSequence& kp, const body::RobotModel& robot,
                                                  const retarget::IkConfig& ik) {
  std::vector<numerics::Vec3> hips;
  for (const auto& f : kp.positions) hips.push_back(0.5 * (f[0] + f[1]));
  const auto roots = retarget::estimate_root_states(hips, kp.fps);
  const auto res = retarget::solve_ik(kp, robot, ik, roots);
  retarget::RobotMotion m;
  m.keypoints = kp;
  m.q = res.q;
  m.root = roots;
  m.ik_residual = res.residuals;
  m.fps = kp.fps;
  return m;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

// ---------------------------------------------------------------- commands

struct RetargetArgs {
  std::string human, robot, in, out, actions;
  std::optional<double> lambda;
};

int run_retarget(const Globals& g, const RetargetArgs& a) {
  retarget::RetargetConfig cfg;
  cfg.ik = ik_config(g.config);
  cfg.shape.max_iters =
      static_cast<int>(g.config.count("retarget.shape.max_iters", static_cast<std::size_t>(cfg.shape.max_iters)));
  if (a.lambda) cfg.ik.lambda_smooth = *a.lambda;
  cfg.ik.validate();
  reject_unused(g.config, {"retarget."});
  const auto human = load_human(a.human);
  const auto robot = load_robot(a.robot);
  const auto in = io::read_sample(a.in);
  const auto pose = io::to_human_pose(in);
  const auto res = retarget::retarget_sequence(human, pose, robot, cfg);
  auto s = io::from_robot_motion(res.motion);
  s.text = in.text;
  s.provenance = "retarget:" + fs::path(a.in).filename().string();
  io::write_sample(s, a.out);
  if (!a.actions.empty()) {
    auto as = io::from_actions(retarget::resample_actions(res.motion.q));
    as.text = in.text;
    as.provenance = s.provenance;
    io::write_sample(as, a.actions);
  }
  double mean = 0.0;
  for (double r : res.motion.ik_residual) mean += r / static_cast<double>(res.motion.ik_residual.size());
  g.log() << "retargeted " << res.motion.frames() << " frames; shape fit " << res.shape.final_loss
          << " m; mean IK residual " << mean << " m\n";
  return 0;
}

struct TokenizerArgs {
  std::string mode = "action", in, out, model;
  std::size_t synthetic = 0;
};

// Training matrices from sample files: action q for action mode, keypoint
// features of robot motions for keypoint mode.
std::vector<numerics::Matrix> training_matrices(const std::string& in, generator::MotionMode mode) {
  std::vector<numerics::Matrix> out;
  for (const auto& p : sample_paths(in)) {
    const auto s = io::read_sample(p);
    if (mode == generator::MotionMode::Action && s.kind == io::SampleKind::Action)
      out.push_back(io::to_actions(s).q);
    else if (mode == generator::MotionMode::Keypoint && s.kind == io::SampleKind::RobotMotion)
      out.push_back(generator::keypoint_features(io::to_robot_motion(s).keypoints));
  }
  if (out.empty())
    throw ValidationError("no " + std::string(mode == generator::MotionMode::Action ? "action" : "robot_motion") +
                          " samples under " + in);
  return out;
}

int run_tokenizer_train(const Globals& g, const TokenizerArgs& a) {
  const auto mode = generator::parse_mode(a.mode);
  const auto cfg = tokenizer_config(g.config, mode);
  const auto tcfg = tokenizer_train_config(g.config);
  const std::size_t synth_frames = g.config.count("tokenizer.synthetic_frames", 256);
  reject_unused(g.config, {"tokenizer."});
  std::vector<numerics::Matrix> data;
  if (a.synthetic > 0) {
    if (mode != generator::MotionMode::Action) throw UsageError("--synthetic applies to --mode action only");
    data = tokenizer::sinusoid_action_dataset(body::default_robot_model(), a.synthetic, synth_frames, g.seed);
  } else {
    if (a.in.empty()) throw UsageError("tokenizer train needs --in <dir> or --synthetic N");
    data = training_matrices(a.in, mode);
  }
  tokenizer::TokenizerTrainLog log;
  const auto tok = tokenizer::train_tokenizer(cfg, tcfg, data, g.seed, &log);
  for (const auto& e : log.epochs)
    g.log() << "epoch " << e.epoch << " loss " << e.mean.total << " utilization " << e.utilization << "\n";
  g.log() << "reconstruction L1 per frame per channel " << tokenizer::reconstruction_l1(tok, data) << "\n";
  tok.save(a.out);
  return 0;
}

int run_tokenizer_encode(const Globals& g, const TokenizerArgs& a) {
  reject_unused(g.config, {});
  const auto tok = tokenizer::Tokenizer::load(a.model);
  const auto s = io::read_sample(a.in);
  numerics::Matrix x;
  if (s.kind == io::SampleKind::Action)
    x = io::to_actions(s).q;
  else if (s.kind == io::SampleKind::RobotMotion)
    x = generator::keypoint_features(io::to_robot_motion(s).keypoints);
  else
    throw ValidationError("tokenizer encode takes an action or robot_motion sample, got " +
                          std::string(io::kind_name(s.kind)));
  if (x.cols != tok.config().input_dim)
    throw ValidationError("tokenizer expects " + std::to_string(tok.config().input_dim) + " channels, sample has " +
                          std::to_string(x.cols));
  const auto tokens = tok.tokenize(x);
  auto out = io::from_tokens(tokens);
  out.text = s.text;
  out.provenance = "tokenize:" + fs::path(a.in).filename().string();
  out.attributes["unpadded_frames"] = static_cast<double>(x.rows);
  io::write_sample(out, a.out);
  g.log() << "encoded " << x.rows << " frames into " << tokens.indices.size() - 1 << " tokens\n";
  return 0;
}

int run_tokenizer_decode(const Globals& g, const TokenizerArgs& a, const std::string& robot_path) {
  const auto ik = ik_config(g.config);
  reject_unused(g.config, {"retarget."});
  const auto tok = tokenizer::Tokenizer::load(a.model);
  const auto s = io::read_sample(a.in);
  const auto tokens = io::to_tokens(s);
  auto x = tok.detokenize(tokens);
  if (const auto it = s.attributes.find("unpadded_frames"); it != s.attributes.end()) {
    const auto keep = static_cast<std::size_t>(it->second);
    if (keep >= 1 && keep < x.rows) {
      x.rows = keep;
      x.data.resize(keep * x.cols);
    }
  }
  io::MotionSample out;
  if (tok.config().input_dim == generator::kKeypointFeatureDim && tok.config().root_channels > 0) {
    const auto kp = generator::keypoints_from_features(x, numerics::Vec3::Zero(), retarget::kPoseFps);
    out = io::from_robot_motion(robot_motion_from_keypoints(kp, load_robot(robot_path), ik));
  } else {
    retarget::ActionSequence act;
    act.q = x;
    out = io::from_actions(act);
  }
  out.text = s.text;
  out.provenance = "detokenize:" + fs::path(a.in).filename().string();
  io::write_sample(out, a.out);
  g.log() << "decoded " << x.rows << " frames\n";
  return 0;
}

struct GptArgs {
  std::string mode = "action", tokenizer, in, out, model, text, robot;
  std::size_t top_k = 0, max_tokens = 0;
  double temperature = 1.0;
};

int run_gpt_train(const Globals& g, const GptArgs& a) {
  const auto mode = generator::parse_mode(a.mode);
  const auto tok = tokenizer::Tokenizer::load(a.tokenizer);
  if ((mode == generator::MotionMode::Keypoint) != (tok.config().input_dim == generator::kKeypointFeatureDim))
    throw ValidationError("tokenizer channel layout does not match --mode " + a.mode);
  auto cfg = generator::GptConfig::desk(tok.config().codebook_size);
  const auto& c = g.config;
  cfg.layers = c.count("gpt.layers", cfg.layers);
  cfg.heads = c.count("gpt.heads", cfg.heads);
  cfg.model_dim = c.count("gpt.model_dim", cfg.model_dim);
  cfg.context_len = c.count("gpt.context_len", cfg.context_len);
  cfg.dropout = c.number("gpt.dropout", cfg.dropout);
  const std::string pos = c.string("gpt.positional", "learned");
  if (pos != "learned" && pos != "sinusoidal") throw ValidationError("gpt.positional must be learned or sinusoidal");
  cfg.positional = pos == "learned" ? generator::Positional::Learned : generator::Positional::Sinusoidal;
  generator::HashingTextEmbedder embedder(c.count("gpt.text_dim", cfg.d_text));
  cfg.d_text = embedder.dim();
  generator::GptTrainConfig tcfg;
  tcfg.steps = c.count("gpt.train.steps", tcfg.steps);
  tcfg.batch = c.count("gpt.train.batch", tcfg.batch);
  tcfg.adam.learning_rate = c.number("gpt.train.learning_rate", tcfg.adam.learning_rate);
  tcfg.warmup_steps = c.count("gpt.train.warmup_steps", tcfg.warmup_steps);
  tcfg.final_lr_scale = c.number("gpt.train.final_lr_scale", tcfg.final_lr_scale);
  tcfg.eval_every = c.count("gpt.train.eval_every", tcfg.eval_every);
  tcfg.stop_accuracy = c.number("gpt.train.stop_accuracy", tcfg.stop_accuracy);
  reject_unused(c, {"gpt."});

  std::vector<generator::TrainingPair> data;
  for (const auto& p : sample_paths(a.in)) {
    const auto s = io::read_sample(p);
    if (s.kind != io::SampleKind::Tokens) continue;
    if (s.text.empty()) throw ValidationError(p.string() + ": token sample has no text");
    data.push_back({embedder.embed(s.text), io::to_tokens(s).indices});
  }
  if (data.empty()) throw ValidationError("no token samples under " + a.in);
  generator::GptTrainLog log;
  const auto model = generator::train_gpt(cfg, tcfg, data, g.seed, &log);
  for (const auto& e : log.entries)
    if (e.train_accuracy >= 0.0)
      g.log() << "step " << e.step << " loss/token " << e.loss_per_token << " accuracy " << e.train_accuracy << "\n";
  g.log() << "trained " << log.steps_run << " steps on " << data.size() << " pairs; accuracy " << log.final_accuracy
          << "\n";
  model.save(a.out, embedder.name(), tok.content_hash());
  return 0;
}

int run_gpt_generate(const Globals& g, const GptArgs& a) {
  const auto ik = ik_config(g.config);
  reject_unused(g.config, {"retarget."});
  const auto mode = generator::parse_mode(a.mode);
  if (a.text.empty()) throw UsageError("gpt generate needs --text");
  const auto tok = tokenizer::Tokenizer::load(a.tokenizer);
  const auto loaded = generator::Gpt::load(a.model);
  generator::MotionModels models{&tok, &loaded.model, loaded.embedder_name, loaded.tokenizer_hash};
  generator::Sampling sampling;
  if (a.top_k > 0) {
    sampling.mode = generator::Sampling::Mode::TopK;
    sampling.top_k = a.top_k;
    sampling.temperature = a.temperature;
  }
  const std::size_t max_tokens = a.max_tokens ? a.max_tokens : loaded.model.config().context_len - 1;
  const auto gen = generator::text_to_motion(a.text, mode, models, sampling, max_tokens, g.seed);
  io::MotionSample out;
  if (gen.actions) {
    out = io::from_actions(*gen.actions);
  } else if (gen.keypoints && gen.keypoints->frames() > 0) {
    out = io::from_robot_motion(robot_motion_from_keypoints(*gen.keypoints, load_robot(a.robot), ik));
  } else {
    throw ValidationError("generation produced no complete window (" + std::to_string(gen.tokens.size()) + " tokens)");
  }
  out.text = a.text;
  out.provenance = "generate:" + fs::path(a.model).filename().string();
  io::write_sample(out, a.out);
  g.log() << "generated " << gen.tokens.size() << " tokens (" << gen.dropped_tokens << " dropped), " << out.frames
          << " frames\n";
  return 0;
}

struct SimulateArgs {
  std::string motion, mode = "open-loop", policy, actions, out, trajectory, robot;
  std::size_t steps = 0;
};

int run_simulate(const Globals& g, const SimulateArgs& a) {
  const auto plant = plant_config(g.config);
  reject_unused(g.config, {"plant."});
  const auto robot = load_robot(a.robot);
  const auto motion = io::to_robot_motion(io::read_sample(a.motion));
  const auto gains = control::PdGains::from_robot(robot);
  const double length = static_cast<double>(motion.frames() - 1) / motion.fps;
  const auto max_steps = static_cast<std::size_t>(std::floor(length / plant.dt + 1e-9)) + 1;
  const std::size_t steps = a.steps ? a.steps : max_steps;

  std::unique_ptr<control::ActionSource> source;
  std::optional<policy::PolicyNet> net;
  if (a.mode == "open-loop") {
    const auto actions =
        a.actions.empty() ? retarget::resample_actions(motion.q) : io::to_actions(io::read_sample(a.actions));
    source = std::make_unique<control::OpenLoopSource>(actions);
  } else if (a.mode == "policy") {
    if (a.policy.empty()) throw UsageError("--mode policy needs --policy <file>");
    net = policy::PolicyNet::load(a.policy);
    source = std::make_unique<policy::PolicySource>(*net);
  } else {
    throw UsageError("--mode must be open-loop or policy");
  }
  const auto traj = control::rollout(robot, plant, gains, control::initial_state(robot, plant, motion), *source, motion,
                                     steps);
  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw Error("cannot open " + a.out + " for writing");
  control::write_trajectory_jsonl(traj, out);
  if (!out) throw Error("failed writing " + a.out);
  if (!a.trajectory.empty()) {
    auto s = io::from_trajectory(traj);
    s.text = io::read_sample(a.motion).text;
    s.provenance = "simulate:" + a.mode;
    io::write_sample(s, a.trajectory);
  }
  g.log() << "simulated " << traj.steps.size() << " steps; mean imitation reward " << traj.mean_imitation()
          << "; mean upper-body DoF error " << traj.mean_upper_dof_error() << " rad\n";
  return 0;
}

struct PolicyArgs {
  std::string motions, out, curve, robot;
  std::size_t iters = 100;
  bool reduced = false;
};

int run_policy_train(const Globals& g, const PolicyArgs& a) {
  const auto ppo = ppo_config(g.config);
  const auto hidden = parse_sizes(g.config.string("policy.hidden", "64,64"), "policy.hidden");
  policy::TrackingEnvConfig tcfg;
  tcfg.horizon = g.config.count("policy.horizon", tcfg.horizon);
  tcfg.limit_margin = g.config.number("policy.limit_margin", tcfg.limit_margin);
  std::unique_ptr<policy::Env> env;
  if (a.reduced) {
    reject_unused(g.config, {"ppo.", "policy."});
    env = std::make_unique<policy::ReducedEnv>();
  } else {
    const auto plant = plant_config(g.config);
    reject_unused(g.config, {"ppo.", "policy.", "plant."});
    if (a.motions.empty()) throw UsageError("policy train needs --motions <dir> (or --reduced)");
    auto robot = std::make_shared<const body::RobotModel>(load_robot(a.robot));
    auto motions = std::make_shared<std::vector<retarget::RobotMotion>>();
    for (const auto& p : sample_paths(a.motions)) {
      const auto s = io::read_sample(p);
      if (s.kind == io::SampleKind::RobotMotion) motions->push_back(io::to_robot_motion(s));
    }
    if (motions->empty()) throw ValidationError("no robot_motion samples under " + a.motions);
    env = std::make_unique<policy::TrackingEnv>(robot, plant, control::PdGains::from_robot(*robot),
                                                std::shared_ptr<const std::vector<retarget::RobotMotion>>(motions), tcfg);
  }
  const auto res = policy::train_policy(*env, ppo, hidden, g.seed, a.iters);
  for (const auto& p : res.curve)
    if (p.iteration == 1 || p.iteration % 10 == 0 || p.iteration == res.curve.size())
      g.log() << "iteration " << p.iteration << " mean imitation " << p.mean_imitation << "\n";
  res.net.save(a.out);
  if (!a.curve.empty()) {
    std::ostringstream csv;
    policy::write_learning_curve_csv(res.curve, csv);
    write_text(a.curve, csv.str());
  }
  return 0;
}

struct EvaluateArgs {
  std::string generated, reference, motion_features, text_features, out;
  std::size_t pairs = metrics::kDefaultDiversityPairs, top_k = 3;
};

// Features of a directory of motion samples, or a CSV / binary feature file.
metrics::FeatureSet load_feature_set(const std::string& p, const metrics::MotionEmbedder& emb, metrics::Source src) {
  const fs::path path(p);
  if (!fs::is_directory(path) && path.extension() != ".hmx") return {metrics::read_features(path), src};
  std::vector<numerics::Matrix> motions;
  for (const auto& f : sample_paths(path)) {
    const auto s = io::read_sample(f);
    if (s.kind == io::SampleKind::Action)
      motions.push_back(io::to_actions(s).q);
    else if (s.kind == io::SampleKind::RobotMotion)
      motions.push_back(io::to_robot_motion(s).q);
  }
  if (motions.empty()) throw ValidationError("no action or robot_motion samples at " + p);
  return metrics::embed_all(emb, motions, src);
}

int run_evaluate(const Globals& g, const EvaluateArgs& a) {
  reject_unused(g.config, {});
  const metrics::DofStatsEmbedder emb;
  nlohmann::json report;
  report["schema"] = "hmx-eval/1";
  report["embedder"] = emb.name();
  report["seed"] = g.seed;
  report["metrics"] = nlohmann::json::array();
  auto add = [&](const std::string& name, double v) {
    report["metrics"].push_back({{"name", name}, {"value", v}});
    g.log() << name << " " << v << "\n";
  };
  bool any = false;
  if (!a.generated.empty()) {
    const auto gen = load_feature_set(a.generated, emb, metrics::Source::Generated);
    add("diversity", metrics::diversity(gen, a.pairs, g.seed));
    if (!a.reference.empty()) {
      const auto ref = load_feature_set(a.reference, emb, metrics::Source::Reference);
      add("fid", metrics::fid(gen, ref));
    }
    any = true;
  }
  if (!a.motion_features.empty() || !a.text_features.empty()) {
    if (a.motion_features.empty() || a.text_features.empty())
      throw UsageError("--motion-features and --text-features go together");
    const auto m = metrics::read_features(a.motion_features);
    const auto t = metrics::read_features(a.text_features);
    add("mm_dist", metrics::mm_dist(m, t));
    add("r_precision_top" + std::to_string(a.top_k), metrics::r_precision(m, t, a.top_k));
    any = true;
  }
  if (!any) throw UsageError("evaluate needs --generated and/or --motion-features/--text-features");
  if (!a.out.empty()) write_text(a.out, report.dump(2) + "\n");
  return 0;
}

struct PipelineArgs {
  std::string manifest, out;
};

int run_pipeline(const Globals& g, const PipelineArgs& a) {
  const auto cfg = pipeline::PipelineConfig::from_config(g.config);
  reject_unused(g.config, {"pipeline.", "retarget."});
  const auto manifest = pipeline::Manifest::load(a.manifest);
  manifest.validate(false);
  const auto report = pipeline::pipeline_run(manifest, cfg, g.seed, a.out);
  for (const auto& s : report.samples)
    g.log() << (s.ok ? "ok     " : "FAILED ") << s.path << (s.ok ? "" : ": " + s.error) << "\n";
  g.log() << report.samples.size() - report.failed() << "/" << report.samples.size() << " samples succeeded\n";
  return report.failed() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hmx: human-to-humanoid motion toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--config", g.config_path, "Config file (hmx-config/1)")->check(CLI::ExistingFile);
  app.add_flag("--quiet", g.quiet, "Suppress progress output");
  int rc = 0;
  std::function<int()> action;

  RetargetArgs ra;
  auto* rt = app.add_subcommand("retarget", "Retarget a human pose sample onto the robot");
  rt->add_option("--human", ra.human, "Human body model (default: bundled)");
  rt->add_option("--robot", ra.robot, "Robot model (default: bundled)");
  rt->add_option("--in", ra.in, "human_pose sample")->required();
  rt->add_option("--out", ra.out, "robot_motion sample to write")->required();
  rt->add_option("--actions", ra.actions, "Also write the 50 fps action sample");
  rt->add_option("--lambda", ra.lambda, "Smoothing weight");
  rt->callback([&] { action = [&] { return run_retarget(g, ra); }; });

  TokenizerArgs ta;
  std::string ta_robot;
  auto* tk = app.add_subcommand("tokenizer", "Action/keypoint tokenizer");
  tk->require_subcommand(1);
  auto* tk_train = tk->add_subcommand("train", "Train a tokenizer");
  tk_train->add_option("--mode", ta.mode, "action | keypoint")->check(CLI::IsMember({"action", "keypoint"}));
  tk_train->add_option("--in", ta.in, "Directory of training samples");
  tk_train->add_option("--synthetic", ta.synthetic, "Train on N synthetic sinusoid sequences instead");
  tk_train->add_option("--out", ta.out, "Tokenizer file to write")->required();
  tk_train->callback([&] { action = [&] { return run_tokenizer_train(g, ta); }; });
  auto* tk_enc = tk->add_subcommand("encode", "Sample to tokens");
  tk_enc->add_option("--model", ta.model)->required();
  tk_enc->add_option("--in", ta.in)->required();
  tk_enc->add_option("--out", ta.out)->required();
  tk_enc->callback([&] { action = [&] { return run_tokenizer_encode(g, ta); }; });
  auto* tk_dec = tk->add_subcommand("decode", "Tokens to motion");
  tk_dec->add_option("--model", ta.model)->required();
  tk_dec->add_option("--in", ta.in)->required();
  tk_dec->add_option("--out", ta.out)->required();
  tk_dec->add_option("--robot", ta_robot, "Robot model for keypoint decoding (default: bundled)");
  tk_dec->callback([&] { action = [&] { return run_tokenizer_decode(g, ta, ta_robot); }; });

  GptArgs ga;
  auto* gp = app.add_subcommand("gpt", "Text-conditioned token generator");
  gp->require_subcommand(1);
  auto* gp_train = gp->add_subcommand("train", "Train on token samples with texts");
  gp_train->add_option("--mode", ga.mode)->check(CLI::IsMember({"action", "keypoint"}));
  gp_train->add_option("--tokenizer", ga.tokenizer)->required();
  gp_train->add_option("--in", ga.in, "Directory of token samples")->required();
  gp_train->add_option("--out", ga.out)->required();
  gp_train->callback([&] { action = [&] { return run_gpt_train(g, ga); }; });
  auto* gp_gen = gp->add_subcommand("generate", "Generate a motion from text");
  gp_gen->add_option("--mode", ga.mode)->check(CLI::IsMember({"action", "keypoint"}));
  gp_gen->add_option("--model", ga.model)->required();
  gp_gen->add_option("--tokenizer", ga.tokenizer)->required();
  gp_gen->add_option("--text", ga.text)->required();
  gp_gen->add_option("--out", ga.out)->required();
  gp_gen->add_option("--top-k", ga.top_k, "Top-k sampling (0: greedy)");
  gp_gen->add_option("--temperature", ga.temperature);
  gp_gen->add_option("--max-tokens", ga.max_tokens, "Default: context length - 1");
  gp_gen->add_option("--robot", ga.robot, "Robot model for keypoint mode (default: bundled)");
  gp_gen->callback([&] { action = [&] { return run_gpt_generate(g, ga); }; });

  SimulateArgs sa;
  auto* sim = app.add_subcommand("simulate", "Roll out a robot motion on the PD plant");
  sim->add_option("--motion", sa.motion, "robot_motion sample (goals)")->required();
  sim->add_option("--mode", sa.mode)->check(CLI::IsMember({"open-loop", "policy"}));
  sim->add_option("--policy", sa.policy, "Policy file for --mode policy");
  sim->add_option("--actions", sa.actions, "Action sample for open-loop (default: resampled motion)");
  sim->add_option("--steps", sa.steps, "Control steps (default: motion length)");
  sim->add_option("--out", sa.out, "Trajectory log (JSON lines)")->required();
  sim->add_option("--trajectory", sa.trajectory, "Also write a trajectory sample");
  sim->add_option("--robot", sa.robot, "Robot model (default: bundled)");
  sim->callback([&] { action = [&] { return run_simulate(g, sa); }; });

  PolicyArgs pa;
  auto* po = app.add_subcommand("policy", "Tracking policy");
  po->require_subcommand(1);
  auto* po_train = po->add_subcommand("train", "Train with PPO");
  po_train->add_option("--motions", pa.motions, "Directory of robot_motion samples");
  po_train->add_flag("--reduced", pa.reduced, "Train on the 2-DoF reduced plant instead");
  po_train->add_option("--iters", pa.iters)->capture_default_str();
  po_train->add_option("--out", pa.out, "Policy file to write")->required();
  po_train->add_option("--curve", pa.curve, "Learning curve CSV");
  po_train->add_option("--robot", pa.robot, "Robot model (default: bundled)");
  po_train->callback([&] { action = [&] { return run_policy_train(g, pa); }; });

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Generation metrics");
  ev->add_option("--generated", ea.generated, "Directory of samples or a feature file");
  ev->add_option("--reference", ea.reference, "Directory of samples or a feature file");
  ev->add_option("--motion-features", ea.motion_features, "Aligned motion features (CSV or binary)");
  ev->add_option("--text-features", ea.text_features, "Aligned text features (CSV or binary)");
  ev->add_option("--pairs", ea.pairs, "Diversity pairs")->capture_default_str();
  ev->add_option("--top-k", ea.top_k, "R-precision k")->capture_default_str();
  ev->add_option("--out", ea.out, "Report JSON");
  ev->callback([&] { action = [&] { return run_evaluate(g, ea); }; });

  PipelineArgs pla;
  auto* pl = app.add_subcommand("pipeline", "Batch processing");
  pl->require_subcommand(1);
  auto* pl_run = pl->add_subcommand("run", "Retarget, resample and tokenize a manifest");
  pl_run->add_option("--manifest", pla.manifest)->required()->check(CLI::ExistingFile);
  pl_run->add_option("--out", pla.out, "Output directory")->required();
  pl_run->callback([&] { action = [&] { return run_pipeline(g, pla); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  try {
    if (!g.config_path.empty()) g.config = io::Config::load(g.config_path);
    rc = action ? action() : 2;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
