#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptforge/common.hpp"
#include "promptforge/lm.hpp"
#include "promptforge/program.hpp"

namespace promptforge {

struct Example {
  std::string id;
  Record inputs;
  Record metadata;
};

struct Dataset {
  std::vector<Example> examples;
  std::map<std::string, std::vector<std::size_t>> splits;

  /// Unique ids, split indices in range, splits pairwise disjoint.
  void validate() const;
  std::vector<Example> split(const std::string& name) const;
  std::size_t split_size(const std::string& name) const;

  /// JSONL of {id, inputs, metadata}; optional JSON {split: [ids]}. Without a
  /// splits file every example lands in "train".
  static Dataset load(const std::filesystem::path& examples_path,
                      const std::optional<std::filesystem::path>& splits_path = std::nullopt);
  void save(const std::filesystem::path& examples_path, const std::filesystem::path& splits_path) const;
};

/// Task metric mu. Scores are clamped into [0, 1].
struct Metric {
  std::string name;
  std::function<double(const Record& prediction, const Example& example)> scorer;
  bool binary = false;  // scorer only ever returns 0 or 1

  /// Failed predictions score 0 without consulting the scorer.
  double operator()(const Prediction& prediction, const Example& example) const;
};

/// Lowercase, drop ASCII punctuation and the articles a/an/the, collapse
/// whitespace.
std::string normalize_answer(std::string_view text);

/// 1 iff normalized prediction equals normalized gold. Throws MissingGold when
/// the example has no `gold_field` metadata.
double exact_match(const Record& prediction, const Example& example,
                   const std::string& field = "answer", const std::string& gold_field = "answer");

Metric exact_match_metric(std::string field = "answer", std::string gold_field = "answer");

/// Format-conditional exact match: metadata "answer_type" selects a rule
/// (person: lowercase; place: no punctuation; date: ends with "Peace!";
/// other: all caps) that must hold in addition to an exact answer.
Metric conditional_format_metric(std::string field = "answer");

struct EvalDiagnostics {
  std::size_t parse_failures = 0;
  std::size_t lm_failures = 0;
};

struct EvalResult {
  double score = 0.0;
  std::vector<double> per_example;
  EvalDiagnostics diagnostics;
};

/// Mean metric score over `examples`. Parse failures and LM failures score 0
/// and are counted. Aggregation happens in example order regardless of
/// `parallelism`. Throws EmptyBatch; BudgetExhausted propagates.
EvalResult evaluate(const Program& program, const Assignment& assignment,
                    std::span<const Example> examples, const Metric& metric, LmBackend& lm,
                    std::size_t parallelism = 1, std::uint64_t seed = 0);

/// Indices (into dataset.examples) of `batch_size` distinct members of
/// `split`, uniform without replacement.
std::vector<std::size_t> sample_minibatch_indices(const Dataset& dataset, const std::string& split,
                                                  std::size_t batch_size, Rng& rng);

std::vector<Example> sample_minibatch(const Dataset& dataset, const std::string& split,
                                      std::size_t batch_size, Rng& rng);

// ---------------------------------------------------------------------------
// Significance
// ---------------------------------------------------------------------------

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W-)
  double p_two_sided = 1.0;
  std::size_t n = 0;       // pairs after discarding zero differences
  bool exact = false;
};

enum class WilcoxonMethod { Auto, Exact, Normal };

/// Paired signed-rank test. Zero differences are discarded and tied |d| get
/// average ranks. Auto uses the exact null distribution for n <= 25 and the
/// continuity-corrected normal approximation above. Throws TooFewPairs when
/// fewer than 5 nonzero differences remain.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMethod method = WilcoxonMethod::Auto);

// ---------------------------------------------------------------------------
// Trial log
// ---------------------------------------------------------------------------

struct TrialRecord {
  enum class Kind { Minibatch, Full };

  std::size_t trial_index = 0;
  ParamVector param_vector;
  std::vector<std::string> batch_example_ids;  // empty for full evaluations
  double score = 0.0;
  Kind kind = Kind::Minibatch;
  std::optional<ParamVector> proposer_hparams;
  bool degraded = false;
};

void to_json(nlohmann::json& j, const TrialRecord& r);
void from_json(const nlohmann::json& j, TrialRecord& r);

void write_trial_log(const std::filesystem::path& path, std::span<const TrialRecord> trials);
std::vector<TrialRecord> read_trial_log(const std::filesystem::path& path);

}  // namespace promptforge
