#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "promptforge/bootstrap.hpp"
#include "promptforge/evaluation.hpp"
#include "promptforge/lm.hpp"
#include "promptforge/program.hpp"

namespace promptforge {

enum class TipKey { None, Creative, Simple, Description, HighStakes, Persona };

struct Tip {
  TipKey key;
  std::string_view name;
  std::string_view text;
};

/// The six proposal tips, in a fixed order (index == static_cast<int>(key)).
const std::array<Tip, 6>& all_tips();
const Tip& tip(TipKey key);
TipKey tip_from_name(std::string_view name);

/// Everything that can ground an instruction proposal. Disabled fields are
/// nullopt and are omitted from the meta-prompt entirely.
struct GroundingContext {
  std::optional<std::string> dataset_description;
  std::optional<std::string> program_code;
  std::optional<std::string> program_description;
  std::string module_name;
  std::optional<std::string> task_demos;
  std::optional<std::vector<std::pair<std::string, double>>> previous_instructions;
  std::string basic_instruction;
  TipKey tip = TipKey::None;
};

/// Proposer hyperparameters (theta).
struct ProposalHyperparameters {
  bool use_dataset_summary = true;
  bool use_program_summary = true;
  double proposer_temperature = 0.7;
  std::optional<TipKey> tip;                    // nullopt: drawn per candidate
  std::optional<std::size_t> demo_set_choice;   // nullopt: drawn per candidate
  std::size_t max_history = 10;
  std::string seed_instruction;

  nlohmann::json to_json() const;
};

struct InstructionCandidate {
  std::size_t module_index = 0;
  std::string text;
  std::string provenance;  // "seed", "init", or "trial:<k>"
  nlohmann::json theta;    // hyperparameters the candidate was proposed under
};

struct ProposalResult {
  std::vector<InstructionCandidate> candidates;
  bool degraded = false;  // some proposer calls failed
};

struct DatasetSummaryConfig {
  std::size_t batch_size = 10;
  std::size_t max_batches = 25;
  std::size_t complete_limit = 5;
  std::string split = "train";
};

/// Accumulates observations batch by batch, stopping after `complete_limit`
/// "COMPLETE" answers, then condenses them with the summarizer prompt.
/// Returns "" without a summarizer call when no observations accumulated.
std::string summarize_dataset(const Dataset& dataset, LmBackend& proposer,
                              const DatasetSummaryConfig& config = {}, std::uint64_t seed = 0);

std::string summarize_program(const Program& program, LmBackend& proposer, std::uint64_t seed = 0);

std::string build_instruction_meta_prompt(const GroundingContext& ctx);

/// Strips a leading "Proposed Instruction:" cue echo and surrounding space.
std::string clean_proposal(const std::string& completion);

/// Demos of `module_index` from one candidate set, formatted for the meta-prompt.
std::optional<std::string> format_task_demos(const Program& program, std::size_t module_index,
                                             const std::vector<Demonstration>& demos);

/// `count` instruction candidates for one module. Candidate 0 is the verbatim
/// seed instruction. Later candidates come from the proposer at
/// theta.proposer_temperature, each with its own tip and demo view when theta
/// leaves those unset. Proposer failures shrink the list (never below the
/// seed) and set `degraded`.
ProposalResult propose_instructions(const Program& program, std::size_t module_index, std::size_t count,
                                    const GroundingContext& ctx_base, const ProposalHyperparameters& theta,
                                    const std::vector<DemoSet>& demo_sets, LmBackend& proposer, Rng& rng);

/// One fresh proposal (no seed candidate). nullopt on proposer failure.
std::optional<std::string> propose_one(const Program& program, std::size_t module_index,
                                       const GroundingContext& ctx_base, const ProposalHyperparameters& theta,
                                       const std::vector<DemoSet>& demo_sets, LmBackend& proposer, Rng& rng);

// ---------------------------------------------------------------------------
// Program-level (joint) proposals
// ---------------------------------------------------------------------------

struct JointHistoryEntry {
  std::vector<std::string> instructions;  // one per module
  double score = 0.0;
};

/// Meta-prompt showing whole-program trajectories (ascending by score); the
/// proposer must answer with one "<Module> Instruction:" line per module.
std::string build_program_meta_prompt(const Program& program, const std::vector<JointHistoryEntry>& history,
                                      const std::optional<std::string>& dataset_description,
                                      const std::optional<std::string>& program_description, TipKey tip);

/// Parses a joint proposal. Throws ParseError unless every module's
/// instruction is present and nonempty.
std::vector<std::string> parse_program_proposal(const Program& program, const std::string& completion);

/// One joint proposal round. nullopt when the proposer fails or its answer
/// does not yield an instruction for every module.
std::optional<std::vector<std::string>> propose_program(const Program& program,
                                                        const std::vector<JointHistoryEntry>& history,
                                                        const std::optional<std::string>& dataset_description,
                                                        const std::optional<std::string>& program_description,
                                                        TipKey tip, double temperature, LmBackend& proposer,
                                                        Rng& rng);

}  // namespace promptforge
