#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "promptforge/evaluation.hpp"
#include "promptforge/lm.hpp"
#include "promptforge/optimizers.hpp"
#include "promptforge/program.hpp"

namespace promptforge {

/// Instruction-choice interaction between two modules: table[ia][ib].
struct PairwiseTerm {
  std::size_t module_a = 0;
  std::size_t module_b = 1;
  std::vector<std::vector<double>> table;
};

/// A task with a planted quality surface. Quality vectors are laid out like
/// program vectors: [instruction variant per module..., demo style per module...].
struct SyntheticTaskSpec {
  std::string name = "custom";
  std::size_t modules = 1;
  std::vector<std::size_t> instruction_cardinality;
  std::vector<std::size_t> demo_cardinality;  // empty: 1 per module
  double base = 0.0;
  std::vector<std::vector<double>> instruction_terms;  // [module][variant], empty: zeros
  std::vector<std::vector<double>> demo_terms;         // [module][style], empty: zeros
  std::vector<PairwiseTerm> interactions;
  std::size_t example_count = 500;

  /// Throws ConfigError on malformed shapes or a quality outside [0, 1].
  void validate() const;
  std::size_t instruction_card(std::size_t m) const { return instruction_cardinality.at(m); }
  std::size_t demo_card(std::size_t m) const { return demo_cardinality.empty() ? 1 : demo_cardinality.at(m); }
  SearchSpace space() const;
  double quality(const ParamVector& v) const;
};

void to_json(nlohmann::json& j, const SyntheticTaskSpec& s);
/// Accepts either a full spec object or {"suite": "<name>"}.
void from_json(const nlohmann::json& j, SyntheticTaskSpec& s);

/// Built-in suites: "separable-2x6", "interaction-2x4", "noisy-3x4".
SyntheticTaskSpec synthetic_suite(std::string_view name);
std::vector<std::string> synthetic_suite_names();

struct SyntheticTask {
  SyntheticTaskSpec spec;
  std::uint64_t seed = 0;
  Program program;
  Dataset dataset;
  Metric metric;
  std::shared_ptr<ScriptedLm> task_lm;
  std::shared_ptr<ScriptedLm> proposer_lm;
  /// Per-example thresholds: example k is answered correctly iff u[k] < quality.
  std::vector<double> u;

  /// Exact full-split score of a quality vector.
  double full_score(const ParamVector& quality_vector) const;
  /// Every quality vector with its exact full score, in enumeration order.
  std::vector<std::pair<ParamVector, double>> oracle_table() const;
  ParamVector oracle_argmax() const;
  /// The quality vector a program vector realizes under `tables`.
  ParamVector quality_vector(const ParamVector& program_vector, const CandidateTables& tables) const;
};

/// Builds the staged program, a dataset of spec.example_count examples (all in
/// "train"), exact match, and scripted task/proposer LMs. The proposer cycles
/// through instruction variants 1, 2, ... per module, so build a fresh task for
/// every independent run. Throws NonUniqueArgmax when the planted optimum is
/// not unique, either in quality or in realized full score.
SyntheticTask make_synthetic(const SyntheticTaskSpec& spec, std::uint64_t seed);

/// Variant id written in an instruction ("Variant 3: ..."), or 0.
std::size_t instruction_variant(std::string_view instruction);

}  // namespace promptforge
