#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hmx/body/human_model.hpp"
#include "hmx/body/robot_model.hpp"
#include "hmx/io/config.hpp"
#include "hmx/io/sample_file.hpp"
#include "hmx/retarget/retarget.hpp"
#include "hmx/tokenizer/tokenizer.hpp"

namespace hmx::pipeline {

inline constexpr std::string_view kManifestSchema = "hmx-manifest/1";
inline constexpr std::string_view kReportSchema = "hmx-report/1";

struct ManifestEntry {
  std::filesystem::path path;  // as written; resolved against Manifest::base
  std::string text;
  std::string split;  // train | val | test
};

// JSON: {"schema": "hmx-manifest/1", "samples": [{"path", "text", "split"}]}
struct Manifest {
  std::filesystem::path base;
  std::vector<ManifestEntry> samples;

  static Manifest parse(std::string_view json_text, std::filesystem::path base = {});
  static Manifest load(const std::filesystem::path& path);
  std::string to_json() const;
  // Non-empty texts, known splits, unique output stems; with check_files,
  // every path must exist.
  void validate(bool check_files = true) const;
  std::filesystem::path resolve(const ManifestEntry& e) const;
  std::map<std::string, std::size_t> split_counts() const;
};

struct PipelineConfig {
  retarget::RetargetConfig retarget;
  io::Encoding encoding = io::Encoding::Text;
  bool tokenize = false;
  std::filesystem::path tokenizer;    // required when tokenize
  std::filesystem::path human_model;  // empty: bundled default
  std::filesystem::path robot_model;  // empty: bundled default
  bool record_timings = true;

  // Reads "pipeline.*" and "retarget.*" keys.
  static PipelineConfig from_config(const io::Config& c);
};

struct SampleReport {
  std::string path;
  std::string text, split;
  bool ok = false;
  std::string error;
  std::size_t pose_frames = 0, robot_frames = 0, action_frames = 0, tokens = 0;
  double shape_fit_loss = 0.0;
  double ik_residual_mean = 0.0, ik_residual_max = 0.0;
  double ik_loss = 0.0;
  std::vector<std::string> outputs;  // file names inside the output directory
  std::map<std::string, double> timings_ms;
};

struct RunReport {
  std::uint64_t seed = 0;
  std::string human_model, robot_model, tokenizer;
  std::vector<SampleReport> samples;  // sorted by path

  std::size_t failed() const;
  std::string to_json() const;
};

// Retarget -> resample -> (optionally) tokenize each sample, in path order.
// Sample failures are recorded and the run continues. Writes report.json into
// out_dir and returns the report.
RunReport pipeline_run(const Manifest& manifest, const PipelineConfig& cfg, std::uint64_t seed,
                       const std::filesystem::path& out_dir);

// Structural check of a run report; throws ValidationError naming the path of
// the first offending field.
void validate_report(std::string_view json_text);

}  // namespace hmx::pipeline
