#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "promptforge/common.hpp"
#include "promptforge/lm.hpp"

namespace promptforge {

/// A prompt variable: the instruction of a module or one of its demo slots.
struct VariableId {
  enum class Kind { Instruction, Demo };

  std::size_t module_index = 0;
  Kind kind = Kind::Instruction;
  std::size_t slot = 0;  // demo slot k; always 0 for instructions

  static VariableId instruction(std::size_t module) { return {module, Kind::Instruction, 0}; }
  static VariableId demo(std::size_t module, std::size_t k) { return {module, Kind::Demo, k}; }

  std::string to_string() const;
  auto operator<=>(const VariableId&) const = default;
};

namespace segment {
struct Literal {
  std::string text;
};
struct Slot {
  VariableId variable;
};
struct Input {
  std::string name;
};
struct Output {
  std::string name;
};
}  // namespace segment

using Segment = std::variant<segment::Literal, segment::Slot, segment::Input, segment::Output>;

struct PromptTemplate {
  std::vector<Segment> segments;

  /// Checks the template invariants for module `module_index` with `max_demos`
  /// demo slots; throws InvalidProgram.
  void validate(std::size_t module_index, std::size_t max_demos) const;

  /// Template text with `{m0.instruction}`-style markers for slots.
  std::string describe() const;
};

struct OutputFieldSpec {
  std::string name;
  std::string description;
};

struct GenParams {
  int max_tokens = 150;
  std::vector<std::string> stop_sequences = kDefaultStopSequences;
  double temperature = 0.7;
};

struct ModuleSpec {
  std::string name;
  PromptTemplate prompt;
  std::vector<std::string> input_fields;
  std::vector<OutputFieldSpec> output_fields;
  GenParams gen;
  std::string seed_instruction;
  std::size_t max_demos = 0;  // K

  void validate(std::size_t module_index) const;
};

/// Builds a module with the standard completion layout: instruction, demo
/// slots, input fields, then the cue for the first output field.
ModuleSpec make_module(std::size_t module_index, std::string name, std::vector<std::string> inputs,
                       std::vector<OutputFieldSpec> outputs, std::string seed_instruction,
                       std::size_t max_demos = 0, GenParams gen = {});

/// One input/output example for a module, harvested from a successful trace.
struct Demonstration {
  std::size_t module_index = 0;
  Record inputs;
  Record outputs;
  std::string source_example_id;
  std::size_t invocation = 0;
  double source_score = 0.0;

  std::string id() const;
  bool operator==(const Demonstration&) const = default;
};

void to_json(nlohmann::json& j, const Demonstration& d);
void from_json(const nlohmann::json& j, Demonstration& d);

/// Partial or total map from program variables to strings.
class Assignment {
 public:
  Assignment& bind(const VariableId& v, std::string value);
  void unbind(const VariableId& v) { bindings_.erase(v); }
  const std::string* find(const VariableId& v) const;
  bool contains(const VariableId& v) const { return bindings_.count(v) != 0; }
  const std::map<VariableId, std::string>& bindings() const { return bindings_; }
  std::size_t size() const { return bindings_.size(); }

  bool operator==(const Assignment&) const = default;

 private:
  std::map<VariableId, std::string> bindings_;
};

void to_json(nlohmann::json& j, const Assignment& a);

struct TraceCall {
  std::size_t module_index = 0;
  std::size_t invocation_ordinal = 0;
  std::string rendered_prompt;
  Record inputs;
  std::string raw_completion;
  Record parsed_outputs;
  bool parse_failed = false;
};

struct Trace {
  std::vector<TraceCall> calls;
};

/// Calls module `module_index` with `inputs` and returns its parsed outputs.
using ModuleInvoker = std::function<Record(std::size_t module_index, const Record& inputs)>;
using ControlFlow = std::function<Record(const ModuleInvoker& invoke, const Record& input)>;

struct Program {
  std::vector<ModuleSpec> modules;
  ControlFlow control_flow;

  void validate() const;
  std::vector<VariableId> variables() const;
  bool is_valid_variable(const VariableId& v) const;
  /// Every instruction bound to its module's seed instruction, no demos.
  Assignment seed_assignment() const;
  bool is_total(const Assignment& a) const;
};

/// Control flow that calls each module once, feeding all accumulated fields
/// forward; the prediction is the union of every module's outputs.
ControlFlow sequential_flow(std::size_t module_count);

std::string format_demo(const ModuleSpec& module, const Demonstration& demo);

std::string render_prompt(const ModuleSpec& module, const Assignment& assignment,
                          std::span<const Demonstration> demos, const Record& inputs);

Record parse_output(const ModuleSpec& module, const std::string& raw_completion);

struct Prediction {
  Record fields;
  bool failed = false;
  std::string error;
};

struct ProgramRun {
  Prediction prediction;
  Trace trace;
};

/// Executes the program's control flow. Parse failures are recorded in the
/// trace and mark the prediction failed; LmError and BudgetExhausted propagate.
ProgramRun run_program(const Program& program, const Assignment& assignment, const Record& input,
                       LmBackend& lm, std::uint64_t rng_seed);

nlohmann::json program_to_json(const Program& program);

/// Python-like pseudocode of the program structure, for the program summarizer.
std::string program_pseudocode(const Program& program);

}  // namespace promptforge
