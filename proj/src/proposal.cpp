#include "promptforge/proposal.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace promptforge {

namespace {

constexpr std::string_view kProposerHeader =
    "Use the information below to learn about a task that we are trying to solve using calls to an "
    "LM, then generate a new instruction that will be used to prompt a Language Model to better "
    "solve the task.";

constexpr std::string_view kObservationPrompt =
    "Given several examples from a dataset please write observations about trends that hold for "
    "most or all of the samples. I will also provide you with a few observations I have already "
    "made. Please add your own observations or if you feel the observations are comprehensive say "
    "'COMPLETE'. Some areas you may consider in your observations: topics, content, syntax, "
    "conciceness, etc. It will be useful to make an educated guess as to the nature of the task "
    "this dataset will enable. Don't be afraid to be creative";

constexpr std::string_view kSummarizerPrompt =
    "Given a series of observations I have made about my dataset, please summarize them into a "
    "brief 2-3 sentence summary which highlights only the most important details.";

constexpr std::string_view kProgramSummarizerPrompt =
    "Below is some pseudo-code for a pipeline that solves tasks with calls to language models. "
    "Please describe what type of task this program appears to be designed to solve, and how it "
    "appears to work.";

constexpr int kProposerMaxTokens = 400;

std::string format_score(double s) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", s);
  return buf;
}

LmRequest proposer_request(LmBackend& proposer, std::string prompt, double temperature, std::uint64_t seed) {
  LmRequest r;
  r.model_id = proposer.model_id();
  r.prompt = std::move(prompt);
  r.temperature = temperature;
  r.top_p = 1.0;
  r.max_tokens = kProposerMaxTokens;
  r.stop_sequences = {"\n---"};
  r.seed = seed;
  return r;
}

void append_field(std::string& out, std::string_view label, const std::string& value) {
  out += "\n\n";
  out += label;
  out += ": ";
  out += value;
}

bool is_complete(const std::string& response) {
  return starts_with_ci(trim(response), "COMPLETE");
}

std::string format_example(const Example& e, std::size_t index) {
  std::string out = "Example " + std::to_string(index + 1) + ":";
  for (const auto& [k, v] : e.inputs) out += "\n" + field_label(k) + ": " + v;
  for (const auto& [k, v] : e.metadata) out += "\n" + field_label(k) + ": " + v;
  return out;
}

GroundingContext apply_theta(const Program& program, std::size_t module_index, const GroundingContext& base,
                             const ProposalHyperparameters& theta, TipKey tip_key,
                             const std::vector<DemoSet>& demo_sets, std::size_t demo_choice) {
  GroundingContext ctx = base;
  if (!theta.use_dataset_summary) ctx.dataset_description.reset();
  if (!theta.use_program_summary) {
    ctx.program_code.reset();
    ctx.program_description.reset();
  }
  if (ctx.dataset_description && ctx.dataset_description->empty()) ctx.dataset_description.reset();
  if (ctx.program_description && ctx.program_description->empty()) ctx.program_description.reset();
  if (ctx.module_name.empty()) ctx.module_name = program.modules.at(module_index).name;
  if (ctx.basic_instruction.empty()) {
    ctx.basic_instruction =
        theta.seed_instruction.empty() ? program.modules.at(module_index).seed_instruction : theta.seed_instruction;
  }
  if (!ctx.task_demos && demo_choice < demo_sets.size() && module_index < demo_sets[demo_choice].size()) {
    ctx.task_demos = format_task_demos(program, module_index, demo_sets[demo_choice][module_index]);
  }
  if (ctx.previous_instructions && ctx.previous_instructions->size() > theta.max_history) {
    // Keep the best max_history entries.
    auto& prev = *ctx.previous_instructions;
    std::stable_sort(prev.begin(), prev.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    prev.resize(theta.max_history);
  }
  ctx.tip = tip_key;
  return ctx;
}

}  // namespace

const std::array<Tip, 6>& all_tips() {
  static const std::array<Tip, 6> kTips = {{
      {TipKey::None, "none", ""},
      {TipKey::Creative, "creative", "Don't be afraid to be creative!"},
      {TipKey::Simple, "simple", "Keep the instruction clear and concise."},
      {TipKey::Description, "description", "Make sure your instruction is very informative and descriptive."},
      {TipKey::HighStakes, "high_stakes",
       "The instruction should include a high stakes scenario in which the LM must solve the task!"},
      {TipKey::Persona, "persona",
       "Provide the LM with a persona that is relevant to the task (ie. \"You are a ...\")"},
  }};
  return kTips;
}

const Tip& tip(TipKey key) { return all_tips()[static_cast<std::size_t>(key)]; }

TipKey tip_from_name(std::string_view name) {
  for (const auto& t : all_tips()) {
    if (t.name == name) return t.key;
  }
  throw ConfigError("unknown tip '" + std::string(name) + "'");
}

nlohmann::json ProposalHyperparameters::to_json() const {
  nlohmann::json j;
  j["use_dataset_summary"] = use_dataset_summary;
  j["use_program_summary"] = use_program_summary;
  j["proposer_temperature"] = proposer_temperature;
  j["tip"] = tip ? nlohmann::json(std::string(promptforge::tip(*tip).name)) : nlohmann::json("random");
  j["demo_set_choice"] = demo_set_choice ? nlohmann::json(*demo_set_choice) : nlohmann::json("random");
  j["max_history"] = max_history;
  return j;
}

std::string summarize_dataset(const Dataset& dataset, LmBackend& proposer, const DatasetSummaryConfig& config,
                              std::uint64_t seed) {
  const auto examples = dataset.split(config.split);
  if (examples.empty()) throw DatasetError("summarize_dataset: split '" + config.split + "' is empty");

  std::string observations;
  std::size_t complete_count = 0;
  std::uint64_t call = 0;
  const std::size_t batch = std::max<std::size_t>(config.batch_size, 1);
  for (std::size_t b = 0; b < config.max_batches && b * batch < examples.size(); ++b) {
    std::string prompt(kObservationPrompt);
    prompt += "\n\n---\n\nExamples:";
    const std::size_t end = std::min(examples.size(), (b + 1) * batch);
    for (std::size_t i = b * batch; i < end; ++i) prompt += "\n" + format_example(examples[i], i);
    append_field(prompt, "Prior Observations", observations.empty() ? "None" : observations);
    prompt += "\n\nObservations:";

    const auto response = complete(proposer, proposer_request(proposer, prompt, 0.7, derive_seed(seed, call++)));
    if (is_complete(response)) {
      if (++complete_count >= config.complete_limit) break;
      continue;
    }
    const auto text = trim(response);
    if (text.empty()) continue;
    if (!observations.empty()) observations += "\n";
    observations += text;
  }
  if (observations.empty()) return "";

  std::string prompt(kSummarizerPrompt);
  append_field(prompt, "\n---\n\nObservations", observations);
  prompt += "\n\nSummary:";
  return trim(complete(proposer, proposer_request(proposer, prompt, 0.7, derive_seed(seed, call++))));
}

std::string summarize_program(const Program& program, LmBackend& proposer, std::uint64_t seed) {
  std::string prompt(kProgramSummarizerPrompt);
  prompt += "\n\n---\n\nProgram Code:\n" + program_pseudocode(program);
  prompt += "\n\nProgram Description:";
  return trim(complete(proposer, proposer_request(proposer, prompt, 0.7, seed)));
}

std::string build_instruction_meta_prompt(const GroundingContext& ctx) {
  std::string out(kProposerHeader);
  out += "\n\n---";
  if (ctx.dataset_description) append_field(out, "Dataset Description", *ctx.dataset_description);
  if (ctx.program_code) append_field(out, "Program Code", "\n" + *ctx.program_code);
  if (ctx.program_description) append_field(out, "Program Description", *ctx.program_description);
  append_field(out, "Module", ctx.module_name);
  if (ctx.task_demos) append_field(out, "Task Demos", "\n" + *ctx.task_demos);
  if (ctx.previous_instructions) {
    auto prev = *ctx.previous_instructions;
    std::stable_sort(prev.begin(), prev.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    std::string block;
    for (std::size_t i = 0; i < prev.size(); ++i) {
      block += "\nInstruction #" + std::to_string(i + 1) + ": " + prev[i].first;
      block += "\nScore #" + std::to_string(i + 1) + ": " + format_score(prev[i].second);
    }
    append_field(out, "Previous Instructions", block);
  }
  append_field(out, "Basic Instruction", ctx.basic_instruction);
  if (ctx.tip != TipKey::None) append_field(out, "Tip", std::string(tip(ctx.tip).text));
  out += "\n\nProposed Instruction:";
  return out;
}

std::string clean_proposal(const std::string& completion) {
  std::string text = trim(completion);
  constexpr std::string_view kCue = "Proposed Instruction:";
  if (starts_with_ci(text, kCue)) text = trim(std::string_view(text).substr(kCue.size()));
  return text;
}

std::optional<std::string> format_task_demos(const Program& program, std::size_t module_index,
                                             const std::vector<Demonstration>& demos) {
  if (demos.empty()) return std::nullopt;
  std::string out;
  for (std::size_t i = 0; i < demos.size(); ++i) {
    if (i) out += "\n\n";
    out += format_demo(program.modules.at(module_index), demos[i]);
  }
  return out;
}

std::optional<std::string> propose_one(const Program& program, std::size_t module_index,
                                       const GroundingContext& ctx_base, const ProposalHyperparameters& theta,
                                       const std::vector<DemoSet>& demo_sets, LmBackend& proposer, Rng& rng) {
  const TipKey tip_key = theta.tip ? *theta.tip : all_tips()[rng.uniform_index(all_tips().size())].key;
  const std::size_t demo_choice =
      theta.demo_set_choice ? *theta.demo_set_choice : rng.uniform_index(std::max<std::size_t>(demo_sets.size(), 1));
  const auto ctx = apply_theta(program, module_index, ctx_base, theta, tip_key, demo_sets, demo_choice);
  const auto prompt = build_instruction_meta_prompt(ctx);
  try {
    auto text = clean_proposal(complete(proposer, proposer_request(proposer, prompt, theta.proposer_temperature, rng.next())));
    if (text.empty()) return std::nullopt;
    return text;
  } catch (const LmError&) {
    return std::nullopt;
  }
}

ProposalResult propose_instructions(const Program& program, std::size_t module_index, std::size_t count,
                                    const GroundingContext& ctx_base, const ProposalHyperparameters& theta,
                                    const std::vector<DemoSet>& demo_sets, LmBackend& proposer, Rng& rng) {
  if (count < 1) throw std::invalid_argument("propose_instructions: count must be >= 1");
  ProposalResult result;
  const std::string seed =
      theta.seed_instruction.empty() ? program.modules.at(module_index).seed_instruction : theta.seed_instruction;
  result.candidates.push_back({module_index, seed, "seed", theta.to_json()});

  auto is_duplicate = [&](const std::string& text) {
    return std::any_of(result.candidates.begin(), result.candidates.end(),
                       [&](const InstructionCandidate& c) { return trim(c.text) == text; });
  };

  for (std::size_t t = 1; t < count; ++t) {
    const TipKey tip_key = theta.tip ? *theta.tip : all_tips()[rng.uniform_index(all_tips().size())].key;
    const std::size_t demo_choice = theta.demo_set_choice
                                        ? *theta.demo_set_choice
                                        : rng.uniform_index(std::max<std::size_t>(demo_sets.size(), 1));
    ProposalHyperparameters fixed = theta;
    fixed.tip = tip_key;
    fixed.demo_set_choice = demo_choice;
    const auto ctx = apply_theta(program, module_index, ctx_base, fixed, tip_key, demo_sets, demo_choice);
    const auto prompt = build_instruction_meta_prompt(ctx);

    std::optional<std::string> text;
    for (int attempt = 0; attempt < 2; ++attempt) {
      try {
        auto proposal =
            clean_proposal(complete(proposer, proposer_request(proposer, prompt, theta.proposer_temperature, rng.next())));
        if (proposal.empty()) continue;
        text = std::move(proposal);
        if (!is_duplicate(*text)) break;  // a duplicate is retried once, then kept
      } catch (const LmError&) {
        break;
      }
    }
    if (!text) {
      result.degraded = true;
      continue;
    }
    result.candidates.push_back({module_index, *text, "init", fixed.to_json()});
  }
  return result;
}

// ---------------------------------------------------------------------------

namespace {

ModuleSpec joint_output_spec(const Program& program) {
  ModuleSpec spec;
  spec.name = "program_proposal";
  for (const auto& m : program.modules) spec.output_fields.push_back({m.name + "_instruction", ""});
  return spec;
}

}  // namespace

std::string build_program_meta_prompt(const Program& program, const std::vector<JointHistoryEntry>& history,
                                      const std::optional<std::string>& dataset_description,
                                      const std::optional<std::string>& program_description, TipKey tip_key) {
  std::string out =
      "Use the information below to learn about a task that we are trying to solve using a pipeline of "
      "LM calls, then generate a new instruction for every module of the pipeline so that the whole "
      "pipeline better solves the task. Earlier instruction sets and the score the whole pipeline "
      "achieved with them are listed from worst to best.";
  out += "\n\n---";
  if (dataset_description && !dataset_description->empty()) append_field(out, "Dataset Description", *dataset_description);
  if (program_description && !program_description->empty()) append_field(out, "Program Description", *program_description);
  append_field(out, "Program Code", "\n" + program_pseudocode(program));

  std::string modules;
  for (const auto& m : program.modules) modules += "\n" + m.name + ": " + m.seed_instruction;
  append_field(out, "Modules", modules);

  auto sorted = history;
  std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.score < b.score; });
  std::string block;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    block += "\nTrajectory #" + std::to_string(i + 1) + ":";
    for (std::size_t m = 0; m < program.modules.size() && m < sorted[i].instructions.size(); ++m) {
      block += "\n" + field_label(program.modules[m].name + "_instruction") + ": " + sorted[i].instructions[m];
    }
    block += "\nScore: " + format_score(sorted[i].score);
  }
  append_field(out, "Previous Trajectories", block);
  if (tip_key != TipKey::None) append_field(out, "Tip", std::string(tip(tip_key).text));

  out += "\n\nRespond with one line per module, in this order:";
  for (const auto& m : program.modules) out += "\n" + field_label(m.name + "_instruction") + ": ...";
  out += "\n\n" + field_label(program.modules.front().name + "_instruction") + ":";
  return out;
}

std::vector<std::string> parse_program_proposal(const Program& program, const std::string& completion) {
  const auto spec = joint_output_spec(program);
  const auto parsed = parse_output(spec, completion);
  std::vector<std::string> out;
  for (const auto& f : spec.output_fields) {
    const auto& text = parsed.at(f.name);
    if (text.empty()) throw ParseError("joint proposal has an empty instruction for '" + f.name + "'");
    out.push_back(text);
  }
  return out;
}

std::optional<std::vector<std::string>> propose_program(const Program& program,
                                                        const std::vector<JointHistoryEntry>& history,
                                                        const std::optional<std::string>& dataset_description,
                                                        const std::optional<std::string>& program_description,
                                                        TipKey tip_key, double temperature, LmBackend& proposer,
                                                        Rng& rng) {
  const auto prompt = build_program_meta_prompt(program, history, dataset_description, program_description, tip_key);
  const auto cue = field_label(program.modules.front().name + "_instruction") + ":";
  try {
    // The prompt ends with the first module's cue, so re-attach it before parsing.
    auto completion = complete(proposer, proposer_request(proposer, prompt, temperature, rng.next()));
    completion = trim(completion);
    if (!starts_with_ci(completion, cue)) completion = cue + " " + completion;
    return parse_program_proposal(program, completion);
  } catch (const LmError&) {
    return std::nullopt;
  } catch (const ParseError&) {
    return std::nullopt;
  }
}

}  // namespace promptforge
