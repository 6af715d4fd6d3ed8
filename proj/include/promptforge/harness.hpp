#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptforge/optimizers.hpp"
#include "promptforge/synthetic.hpp"

namespace promptforge {

/// One LM backend as configured: "synthetic" (the task's scripted LMs),
/// "http" (completions endpoint) or "replay" (cache only, misses fail).
struct BackendConfig {
  std::string type = "synthetic";
  std::string base_url;  // empty: PROMPTFORGE_BASE_URL
  std::string endpoint = "/v1/completions";
  std::string model = "default";
  std::optional<std::filesystem::path> cache;
  int max_retries = 3;
};

struct RunConfig {
  // task: exactly one of these
  std::optional<SyntheticTaskSpec> synthetic;
  std::optional<std::filesystem::path> dataset_path;
  std::optional<std::filesystem::path> splits_path;

  std::string program = "synthetic";  // "synthetic", "qa", "two_stage_qa"
  std::string metric = "exact_match";  // "exact_match", "conditional_format"
  OptimizerConfig optimizer;
  Budget budget;
  BackendConfig task_lm;
  BackendConfig proposer_lm;
  std::optional<BackendConfig> teacher_lm;
  std::uint64_t seed = 0;
  std::uint64_t task_seed = 0;  // synthetic task generation
  std::size_t parallelism = 1;
  std::filesystem::path output_dir = "runs/latest";
  std::optional<std::filesystem::path> demo_store;
};

/// Parses a config document. "_note" keys are ignored anywhere; unknown keys
/// and type errors raise ConfigError naming the field (and the line for
/// syntax errors). Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::ordered_json run_config_to_json(const RunConfig& config);

/// Registered program ids usable with dataset tasks.
Program make_registered_program(const std::string& id);
Metric make_registered_metric(const std::string& id);

struct RunOutcome {
  OptimizerRun run;
  std::filesystem::path output_dir;
};

/// Builds task, program, metric and backends from `config`, optimizes and
/// writes the run directory: config.json, instructions.json, summaries.json,
/// demos.jsonl, trials.jsonl, best.json, importance.json (MIPRO++ only).
RunOutcome run_from_config(const RunConfig& config);

void write_run_directory(const std::filesystem::path& dir, const RunConfig& config, const OptimizerRun& run);

enum class ReportFormat { Csv, Json };

/// Writes trials.csv (or trials.json), progression.json and, when the run has
/// importance.json, importance.csv. Throws MissingLog without trials.jsonl.
void write_report(const std::filesystem::path& run_dir, ReportFormat format);

/// Writes a synthetic task's dataset and exact oracle to `out_dir`.
void write_synthetic(const SyntheticTaskSpec& spec, std::uint64_t seed, const std::filesystem::path& out_dir);

/// Command-line entry point; returns the process exit code (0 success, 2 run
/// ended by the call ceiling with a result, 1 fatal).
int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace promptforge
