#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "promptforge/bootstrap.hpp"
#include "promptforge/evaluation.hpp"
#include "promptforge/lm.hpp"
#include "promptforge/program.hpp"
#include "promptforge/proposal.hpp"
#include "promptforge/surrogate.hpp"

namespace promptforge {

struct Budget {
  std::size_t max_trials = 50;          // I
  std::size_t minibatch_size = 25;      // B
  std::size_t full_eval_interval = 10;  // S
  std::optional<std::size_t> call_ceiling;

  void validate() const;
};

/// Largest n with n*B + (floor(n/S) + 2) * |D| <= F * |D|: the minibatch
/// trials that fit in F full evaluations, counting the periodic checkpoints,
/// the seed evaluation and the final extraction evaluation.
std::size_t minibatch_trials_for(std::size_t full_evals, std::size_t split_size, std::size_t minibatch_size = 25,
                                 std::size_t full_eval_interval = 10);

enum class OptimizerKind {
  BootstrapRS,
  ModuleOPRO,
  ProgramOPRO,
  CaOPRO,
  MIPRO,
  ZeroShotMIPRO,
  BayesianBootstrap,
  ZeroShotMIPROpp,
};

std::string_view to_string(OptimizerKind kind);
/// Throws ConfigError listing the valid names.
OptimizerKind optimizer_kind_from_string(std::string_view name);
const std::vector<OptimizerKind>& all_optimizer_kinds();

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::MIPRO;
  std::size_t num_instruction_candidates = 10;  // T
  std::size_t num_demo_sets = 10;               // N_sets, including the empty set
  std::size_t max_demos = 4;                    // K
  ProposalHyperparameters theta;                // proposer defaults
  std::size_t max_history = 10;                 // OPRO variants
  std::size_t ascent_passes = 1;                // D (CA-OPRO)
  std::size_t proposals_per_step = 4;           // N (CA-OPRO)
  bool grounding = true;                        // false: the OPRO -G arm
  std::optional<double> accept_threshold;       // defaults per metric
  std::size_t max_bootstrap_examples = 100;
  TpeSettings tpe;
  std::string split = "train";

  void validate() const;
};

struct LmBackends {
  std::shared_ptr<LmBackend> task;
  std::shared_ptr<LmBackend> proposer;
  std::shared_ptr<LmBackend> teacher;  // null: use the task LM
};

struct CandidateTables {
  /// instructions[m] lists module m's candidates; index 0 is the seed.
  std::vector<std::vector<InstructionCandidate>> instructions;
  /// demo_sets[s][m]; set 0 is empty.
  std::vector<DemoSet> demo_sets;
  std::string dataset_summary;
  std::string program_summary;
  DemoStore demo_store;
};

struct OptimizerRun {
  Assignment best_assignment;
  ParamVector best_vector;
  double best_score_full = 0.0;
  std::vector<TrialRecord> trial_log;
  CandidateTables candidates;
  std::uint64_t seed = 0;
  /// Surrogate space; for MIPRO++ this is the proposer-hyperparameter space.
  SearchSpace space;
  std::map<std::string, double> importance;  // MIPRO++ only
  bool budget_exhausted = false;
  std::size_t lm_calls = 0;
};

struct OptimizeOptions {
  std::size_t parallelism = 1;
  /// Shared call counter; created from budget.call_ceiling when null.
  std::shared_ptr<CallBudget> call_budget;
  /// Use these demonstrations instead of bootstrapping new ones.
  std::optional<DemoStore> demo_store;
};

/// Program vector layout: [instruction index per module..., demo-set index per module...].
Assignment assignment_for(const Program& program, const CandidateTables& tables, const ParamVector& v);

/// Index of the first Full record with the highest score. Throws
/// NoEligibleVector when the log has no Full record.
std::size_t best_full_record(std::span<const TrialRecord> trials);

/// Running maximum over Full records (NaN before the first one).
std::vector<double> running_best_full(std::span<const TrialRecord> trials);

/// Runs optimizer `config.kind`. With a call ceiling, every LM call is
/// charged; when the ceiling is hit the partial run is returned with
/// budget_exhausted set, or BudgetExhausted propagates if nothing was fully
/// evaluated yet.
OptimizerRun optimize(const OptimizerConfig& config, const Program& program, const Metric& metric,
                      const Dataset& dataset, const Budget& budget, const LmBackends& lms, std::uint64_t seed,
                      const OptimizeOptions& options = {});

}  // namespace promptforge
