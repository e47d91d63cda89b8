#include "hmx/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

#include "hmx/error.hpp"
#include "json.hpp"

namespace hmx::pipeline {

using nlohmann::json;

namespace {

const std::set<std::string> kSplits{"train", "val", "test"};

// Output stem: file name without every extension ("walk.pose.hmx" -> "walk").
std::string stem_of(const std::filesystem::path& p) {
  std::string s = p.filename().string();
  return s.substr(0, s.find('.'));
}

}  // namespace

Manifest Manifest::parse(std::string_view json_text, std::filesystem::path base) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError("manifest: byte " + std::to_string(e.byte) + ": " + e.what());
  }
  if (!j.is_object() || j.value("schema", "") != kManifestSchema)
    throw ParseError("manifest: schema must be " + std::string(kManifestSchema));
  if (!j.contains("samples") || !j["samples"].is_array()) throw ParseError("manifest: samples must be an array");
  Manifest m;
  m.base = std::move(base);
  for (std::size_t i = 0; i < j["samples"].size(); ++i) {
    const json& s = j["samples"][i];
    const std::string at = "manifest: samples[" + std::to_string(i) + "]";
    if (!s.is_object()) throw ParseError(at + ": not an object");
    ManifestEntry e;
    for (const char* key : {"path", "text", "split"})
      if (!s.contains(key) || !s[key].is_string()) throw ParseError(at + "." + key + ": missing or not a string");
    e.path = s["path"].get<std::string>();
    e.text = s["text"].get<std::string>();
    e.split = s["split"].get<std::string>();
    m.samples.push_back(std::move(e));
  }
  return m;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse(text, path.parent_path());
}

std::string Manifest::to_json() const {
  json j;
  j["schema"] = kManifestSchema;
  j["samples"] = json::array();
  for (const auto& e : samples) j["samples"].push_back({{"path", e.path.generic_string()}, {"text", e.text}, {"split", e.split}});
  return j.dump(2) + "\n";
}

std::filesystem::path Manifest::resolve(const ManifestEntry& e) const {
  return e.path.is_relative() && !base.empty() ? base / e.path : e.path;
}

void Manifest::validate(bool check_files) const {
  if (samples.empty()) throw ValidationError("manifest: no samples");
  std::set<std::string> stems;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& e = samples[i];
    const std::string at = "manifest: samples[" + std::to_string(i) + "]";
    if (e.text.find_first_not_of(" \t\r\n") == std::string::npos) throw ValidationError(at + ".text: empty");
    if (!kSplits.contains(e.split)) throw ValidationError(at + ".split: '" + e.split + "' is not train, val or test");
    if (!stems.insert(stem_of(e.path)).second)
      throw ValidationError(at + ".path: output name '" + stem_of(e.path) + "' is used twice");
    if (check_files && !std::filesystem::exists(resolve(e)))
      throw ValidationError(at + ".path: " + resolve(e).string() + " does not exist");
  }
}

std::map<std::string, std::size_t> Manifest::split_counts() const {
  std::map<std::string, std::size_t> c;
  for (const auto& e : samples) ++c[e.split];
  return c;
}

PipelineConfig PipelineConfig::from_config(const io::Config& c) {
  PipelineConfig p;
  const std::string enc = c.string("pipeline.encoding", "text");
  if (enc == "text")
    p.encoding = io::Encoding::Text;
  else if (enc == "binary")
    p.encoding = io::Encoding::Binary;
  else
    throw ValidationError("pipeline.encoding must be text or binary, got '" + enc + "'");
  p.tokenize = c.flag("pipeline.tokenize", false);
  p.tokenizer = c.path("pipeline.tokenizer", {});
  p.human_model = c.path("pipeline.human_model", {});
  p.robot_model = c.path("pipeline.robot_model", {});
  p.record_timings = c.flag("pipeline.record_timings", true);
  auto& ik = p.retarget.ik;
  ik.lambda_smooth = c.number("retarget.ik.lambda_smooth", ik.lambda_smooth);
  ik.max_iters = static_cast<int>(c.count("retarget.ik.max_iters", static_cast<std::size_t>(ik.max_iters)));
  ik.adam.learning_rate = c.number("retarget.ik.learning_rate", ik.adam.learning_rate);
  ik.convergence_tol = c.number("retarget.ik.convergence_tol", ik.convergence_tol);
  auto& sh = p.retarget.shape;
  sh.max_iters = static_cast<int>(c.count("retarget.shape.max_iters", static_cast<std::size_t>(sh.max_iters)));
  sh.adam.learning_rate = c.number("retarget.shape.learning_rate", sh.adam.learning_rate);
  ik.validate();
  if (p.tokenize && p.tokenizer.empty()) throw ValidationError("pipeline.tokenize needs pipeline.tokenizer");
  return p;
}

std::size_t RunReport::failed() const {
  return static_cast<std::size_t>(std::count_if(samples.begin(), samples.end(), [](const auto& s) { return !s.ok; }));
}

std::string RunReport::to_json() const {
  json j;
  j["schema"] = kReportSchema;
  j["seed"] = seed;
  j["models"] = {{"human", human_model}, {"robot", robot_model}, {"tokenizer", tokenizer}};
  j["counts"] = {{"total", samples.size()}, {"ok", samples.size() - failed()}, {"failed", failed()}};
  j["samples"] = json::array();
  for (const auto& s : samples) {
    json js;
    js["path"] = s.path;
    js["text"] = s.text;
    js["split"] = s.split;
    js["status"] = s.ok ? "ok" : "failed";
    if (!s.ok) js["error"] = s.error;
    js["frames"] = {{"pose", s.pose_frames}, {"robot", s.robot_frames}, {"action", s.action_frames}, {"tokens", s.tokens}};
    js["residuals"] = {{"shape_fit", s.shape_fit_loss},
                       {"ik_mean", s.ik_residual_mean},
                       {"ik_max", s.ik_residual_max},
                       {"ik_loss", s.ik_loss}};
    js["outputs"] = s.outputs;
    js["timings_ms"] = json::object();
    for (const auto& [k, v] : s.timings_ms) js["timings_ms"][k] = v;
    j["samples"].push_back(std::move(js));
  }
  return j.dump(2) + "\n";
}

RunReport pipeline_run(const Manifest& manifest, const PipelineConfig& cfg, std::uint64_t seed,
                       const std::filesystem::path& out_dir) {
  manifest.validate(false);
  cfg.retarget.ik.validate();
  const body::HumanBodyModel human =
      cfg.human_model.empty() ? body::default_human_model() : body::HumanBodyModel::load(cfg.human_model);
  const body::RobotModel robot =
      cfg.robot_model.empty() ? body::default_robot_model() : body::RobotModel::load(cfg.robot_model);
  std::optional<tokenizer::Tokenizer> tok;
  if (cfg.tokenize) {
    tok = tokenizer::Tokenizer::load(cfg.tokenizer);
    if (tok->config().input_dim != robot.dof_count())
      throw ValidationError("pipeline: tokenizer expects " + std::to_string(tok->config().input_dim) + " DoFs, robot has " +
                            std::to_string(robot.dof_count()));
  }
  std::filesystem::create_directories(out_dir);

  RunReport report;
  report.seed = seed;
  report.human_model = cfg.human_model.empty() ? "bundled:" + human.name() : cfg.human_model.filename().string();
  report.robot_model = cfg.robot_model.empty() ? "bundled:" + robot.name() : cfg.robot_model.filename().string();
  report.tokenizer = cfg.tokenize ? cfg.tokenizer.filename().string() : "";

  std::vector<const ManifestEntry*> order;
  for (const auto& e : manifest.samples) order.push_back(&e);
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->path.generic_string() < b->path.generic_string(); });

  using clock = std::chrono::steady_clock;
  auto ms_since = [](clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(clock::now() - t0).count();
  };
  for (const ManifestEntry* e : order) {
    SampleReport rep;
    rep.path = e->path.generic_string();
    rep.text = e->text;
    rep.split = e->split;
    const std::string stem = stem_of(e->path);
    try {
      auto t0 = clock::now();
      const io::MotionSample in = io::read_sample(manifest.resolve(*e));
      const retarget::HumanPoseSequence pose = io::to_human_pose(in);
      pose.validate(human);
      rep.pose_frames = pose.frames();
      if (cfg.record_timings) rep.timings_ms["read"] = ms_since(t0);

      t0 = clock::now();
      const retarget::RetargetResult rr = retarget::retarget_sequence(human, pose, robot, cfg.retarget);
      if (cfg.record_timings) rep.timings_ms["retarget"] = ms_since(t0);
      rep.robot_frames = rr.motion.frames();
      rep.shape_fit_loss = rr.shape.final_loss;
      rep.ik_loss = rr.loss.total(cfg.retarget.ik.lambda_smooth);
      for (double r : rr.motion.ik_residual) {
        rep.ik_residual_mean += r / static_cast<double>(rr.motion.ik_residual.size());
        rep.ik_residual_max = std::max(rep.ik_residual_max, r);
      }

      t0 = clock::now();
      const retarget::ActionSequence actions = retarget::resample_actions(rr.motion.q);
      rep.action_frames = actions.frames();
      if (cfg.record_timings) rep.timings_ms["resample"] = ms_since(t0);

      std::vector<std::pair<std::string, io::MotionSample>> outputs;
      io::MotionSample robot_sample = io::from_robot_motion(rr.motion);
      io::MotionSample action_sample = io::from_actions(actions);
      for (io::MotionSample* s : {&robot_sample, &action_sample}) {
        s->text = e->text;
        s->provenance = "pipeline:" + rep.path;
      }
      outputs.emplace_back(stem + ".robot.hmx", std::move(robot_sample));
      outputs.emplace_back(stem + ".action.hmx", std::move(action_sample));
      if (tok) {
        t0 = clock::now();
        const tokenizer::TokenSequence tokens = tok->tokenize(actions.q);
        rep.tokens = tokens.indices.size();
        io::MotionSample ts = io::from_tokens(tokens);
        ts.text = e->text;
        ts.provenance = "pipeline:" + rep.path;
        outputs.emplace_back(stem + ".tokens.hmx", std::move(ts));
        if (cfg.record_timings) rep.timings_ms["tokenize"] = ms_since(t0);
      }
      t0 = clock::now();
      for (const auto& [name, s] : outputs) {
        io::write_sample(s, out_dir / name, cfg.encoding);
        rep.outputs.push_back(name);
      }
      if (cfg.record_timings) rep.timings_ms["write"] = ms_since(t0);
      rep.ok = true;
    } catch (const std::exception& ex) {
      rep.ok = false;
      rep.error = ex.what();
    }
    report.samples.push_back(std::move(rep));
  }

  const std::string text = report.to_json();
  validate_report(text);
  std::ofstream out(out_dir / "report.json", std::ios::binary);
  if (!out) throw Error("cannot write " + (out_dir / "report.json").string());
  out << text;
  return report;
}

namespace {

void require(const json& j, const std::string& key, json::value_t type, const std::string& at) {
  if (!j.contains(key)) throw ValidationError(at + key + ": missing");
  const auto t = j[key].type();
  const bool number = type == json::value_t::number_float;
  const bool ok = number ? j[key].is_number()
                         : type == json::value_t::number_unsigned ? j[key].is_number_unsigned() : t == type;
  if (!ok) throw ValidationError(at + key + ": wrong type");
}

}  // namespace

void validate_report(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError("report: not JSON (byte " + std::to_string(e.byte) + ")");
  }
  using vt = json::value_t;
  if (!j.is_object()) throw ValidationError("report: not an object");
  require(j, "schema", vt::string, "");
  if (j["schema"] != kReportSchema) throw ValidationError("schema: expected " + std::string(kReportSchema));
  require(j, "seed", vt::number_unsigned, "");
  require(j, "models", vt::object, "");
  for (const char* k : {"human", "robot", "tokenizer"}) require(j["models"], k, vt::string, "models.");
  require(j, "counts", vt::object, "");
  for (const char* k : {"total", "ok", "failed"}) require(j["counts"], k, vt::number_unsigned, "counts.");
  require(j, "samples", vt::array, "");
  std::size_t ok = 0;
  std::string prev;
  for (std::size_t i = 0; i < j["samples"].size(); ++i) {
    const json& s = j["samples"][i];
    const std::string at = "samples[" + std::to_string(i) + "].";
    if (!s.is_object()) throw ValidationError(at.substr(0, at.size() - 1) + ": not an object");
    for (const char* k : {"path", "text", "split", "status"}) require(s, k, vt::string, at);
    const std::string status = s["status"];
    if (status != "ok" && status != "failed") throw ValidationError(at + "status: must be ok or failed");
    if (status == "failed") require(s, "error", vt::string, at);
    ok += status == "ok";
    if (i > 0 && s["path"].get<std::string>() < prev) throw ValidationError(at + "path: samples are not sorted by path");
    prev = s["path"];
    require(s, "frames", vt::object, at);
    for (const char* k : {"pose", "robot", "action", "tokens"}) require(s["frames"], k, vt::number_unsigned, at + "frames.");
    require(s, "residuals", vt::object, at);
    for (const char* k : {"shape_fit", "ik_mean", "ik_max", "ik_loss"})
      require(s["residuals"], k, vt::number_float, at + "residuals.");
    require(s, "outputs", vt::array, at);
    for (std::size_t o = 0; o < s["outputs"].size(); ++o)
      if (!s["outputs"][o].is_string()) throw ValidationError(at + "outputs[" + std::to_string(o) + "]: not a string");
    require(s, "timings_ms", vt::object, at);
    for (const auto& [k, v] : s["timings_ms"].items())
      if (!v.is_number()) throw ValidationError(at + "timings_ms." + k + ": not a number");
  }
  if (j["counts"]["total"] != j["samples"].size() || j["counts"]["ok"] != ok ||
      j["counts"]["failed"] != j["samples"].size() - ok)
    throw ValidationError("counts: do not match the sample list");
}

}  // namespace hmx::pipeline
