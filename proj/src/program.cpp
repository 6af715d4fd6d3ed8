#include "promptforge/program.hpp"

#include <set>
#include <sstream>

namespace promptforge {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Internal signal that aborts the control flow after a parse failure.
struct ParseAbort {
  std::string message;
};

std::optional<std::string> marker_value(const std::string& line, const std::string& field) {
  std::size_t start = 0;
  while (start < line.size() && (line[start] == ' ' || line[start] == '\t')) ++start;
  const std::string_view rest(line.data() + start, line.size() - start);
  for (const auto& marker : {field_label(field) + ":", field + ":"}) {
    if (starts_with_ci(rest, marker)) return std::string(rest.substr(marker.size()));
  }
  return std::nullopt;
}

}  // namespace

std::string VariableId::to_string() const {
  std::string s = "m" + std::to_string(module_index) + ".";
  return kind == Kind::Instruction ? s + "instruction" : s + "demo" + std::to_string(slot);
}

void PromptTemplate::validate(std::size_t module_index, std::size_t max_demos) const {
  std::set<VariableId> seen;
  bool has_output = false;
  for (const auto& seg : segments) {
    if (const auto* slot = std::get_if<segment::Slot>(&seg)) {
      const auto& v = slot->variable;
      if (v.module_index != module_index) {
        throw InvalidProgram("slot " + v.to_string() + " refers to another module");
      }
      if (v.kind == VariableId::Kind::Demo && v.slot >= max_demos) {
        throw InvalidProgram("demo slot " + v.to_string() + " exceeds the module's K");
      }
      if (!seen.insert(v).second) throw InvalidProgram("slot " + v.to_string() + " appears twice");
    } else if (std::holds_alternative<segment::Output>(seg)) {
      has_output = true;
    }
  }
  if (!has_output) throw InvalidProgram("template has no output field");
}

std::string PromptTemplate::describe() const {
  std::string out;
  for (const auto& seg : segments) {
    std::visit(Overloaded{
                   [&](const segment::Literal& l) { out += l.text; },
                   [&](const segment::Slot& s) { out += "{" + s.variable.to_string() + "}\n"; },
                   [&](const segment::Input& i) { out += field_label(i.name) + ": {" + i.name + "}\n"; },
                   [&](const segment::Output& o) { out += field_label(o.name) + ":"; },
               },
               seg);
  }
  return out;
}

void ModuleSpec::validate(std::size_t module_index) const {
  if (input_fields.empty() || output_fields.empty()) {
    throw InvalidProgram("module '" + name + "' needs input and output fields");
  }
  std::set<std::string> inputs(input_fields.begin(), input_fields.end());
  for (const auto& out : output_fields) {
    if (inputs.count(out.name)) {
      throw InvalidProgram("module '" + name + "': field '" + out.name + "' is both input and output");
    }
  }
  if (gen.max_tokens <= 0) throw InvalidProgram("module '" + name + "': max_tokens must be > 0");
  if (gen.temperature < 0.0) throw InvalidProgram("module '" + name + "': temperature must be >= 0");
  prompt.validate(module_index, max_demos);
}

ModuleSpec make_module(std::size_t module_index, std::string name, std::vector<std::string> inputs,
                       std::vector<OutputFieldSpec> outputs, std::string seed_instruction,
                       std::size_t max_demos, GenParams gen) {
  ModuleSpec m;
  m.name = std::move(name);
  m.input_fields = std::move(inputs);
  m.output_fields = std::move(outputs);
  m.seed_instruction = std::move(seed_instruction);
  m.max_demos = max_demos;
  m.gen = std::move(gen);
  auto& segs = m.prompt.segments;
  segs.emplace_back(segment::Slot{VariableId::instruction(module_index)});
  for (std::size_t k = 0; k < max_demos; ++k) {
    segs.emplace_back(segment::Slot{VariableId::demo(module_index, k)});
  }
  for (const auto& f : m.input_fields) segs.emplace_back(segment::Input{f});
  if (!m.output_fields.empty()) segs.emplace_back(segment::Output{m.output_fields.front().name});
  return m;
}

std::string Demonstration::id() const {
  return "m" + std::to_string(module_index) + ":" + source_example_id + ":" + std::to_string(invocation);
}

void to_json(nlohmann::json& j, const Demonstration& d) {
  j = nlohmann::json{{"module_index", d.module_index},
                     {"source_example_id", d.source_example_id},
                     {"invocation", d.invocation},
                     {"source_score", d.source_score},
                     {"inputs", d.inputs},
                     {"outputs", d.outputs}};
}

void from_json(const nlohmann::json& j, Demonstration& d) {
  j.at("module_index").get_to(d.module_index);
  j.at("source_example_id").get_to(d.source_example_id);
  d.invocation = j.value("invocation", std::size_t{0});
  j.at("source_score").get_to(d.source_score);
  j.at("inputs").get_to(d.inputs);
  j.at("outputs").get_to(d.outputs);
}

Assignment& Assignment::bind(const VariableId& v, std::string value) {
  bindings_[v] = std::move(value);
  return *this;
}

const std::string* Assignment::find(const VariableId& v) const {
  const auto it = bindings_.find(v);
  return it == bindings_.end() ? nullptr : &it->second;
}

void to_json(nlohmann::json& j, const Assignment& a) {
  j = nlohmann::json::object();
  for (const auto& [v, s] : a.bindings()) j[v.to_string()] = s;
}

void Program::validate() const {
  if (modules.empty()) throw InvalidProgram("program has no modules");
  if (!control_flow) throw InvalidProgram("program has no control flow");
  for (std::size_t i = 0; i < modules.size(); ++i) modules[i].validate(i);
}

std::vector<VariableId> Program::variables() const {
  std::vector<VariableId> vars;
  for (std::size_t i = 0; i < modules.size(); ++i) {
    vars.push_back(VariableId::instruction(i));
    for (std::size_t k = 0; k < modules[i].max_demos; ++k) vars.push_back(VariableId::demo(i, k));
  }
  return vars;
}

bool Program::is_valid_variable(const VariableId& v) const {
  if (v.module_index >= modules.size()) return false;
  if (v.kind == VariableId::Kind::Instruction) return v.slot == 0;
  return v.slot < modules[v.module_index].max_demos;
}

Assignment Program::seed_assignment() const {
  Assignment a;
  for (std::size_t i = 0; i < modules.size(); ++i) {
    a.bind(VariableId::instruction(i), modules[i].seed_instruction);
  }
  return a;
}

bool Program::is_total(const Assignment& a) const {
  for (const auto& [v, _] : a.bindings()) {
    if (!is_valid_variable(v)) return false;
  }
  for (std::size_t i = 0; i < modules.size(); ++i) {
    if (!a.contains(VariableId::instruction(i))) return false;
    bool gap = false;
    for (std::size_t k = 0; k < modules[i].max_demos; ++k) {
      const bool bound = a.contains(VariableId::demo(i, k));
      if (bound && gap) return false;
      if (!bound) gap = true;
    }
  }
  return true;
}

ControlFlow sequential_flow(std::size_t module_count) {
  return [module_count](const ModuleInvoker& invoke, const Record& input) {
    Record state = input;
    Record prediction;
    for (std::size_t i = 0; i < module_count; ++i) {
      for (auto& [k, v] : invoke(i, state)) {
        state[k] = v;
        prediction[k] = v;
      }
    }
    return prediction;
  };
}

std::string format_demo(const ModuleSpec& module, const Demonstration& demo) {
  std::string out;
  auto line = [&](const std::string& name, const Record& rec) {
    if (auto it = rec.find(name); it != rec.end()) {
      if (!out.empty()) out += '\n';
      out += field_label(name) + ": " + it->second;
    }
  };
  for (const auto& f : module.input_fields) line(f, demo.inputs);
  for (const auto& f : module.output_fields) line(f.name, demo.outputs);
  return out;
}

std::string render_prompt(const ModuleSpec& module, const Assignment& assignment,
                          std::span<const Demonstration> demos, const Record& inputs) {
  std::string out;
  for (const auto& seg : module.prompt.segments) {
    std::visit(
        Overloaded{
            [&](const segment::Literal& l) { out += l.text; },
            [&](const segment::Slot& s) {
              const auto& v = s.variable;
              std::string text;
              if (const auto* bound = assignment.find(v)) {
                text = *bound;
              } else if (v.kind == VariableId::Kind::Instruction) {
                throw UnboundInstruction("instruction " + v.to_string() + " is unbound");
              } else if (v.slot < demos.size()) {
                text = format_demo(module, demos[v.slot]);
              }
              if (!text.empty()) out += text + "\n\n";
            },
            [&](const segment::Input& i) {
              const auto it = inputs.find(i.name);
              if (it == inputs.end()) throw MissingInputField("missing input field '" + i.name + "'");
              out += field_label(i.name) + ": " + it->second + "\n";
            },
            [&](const segment::Output& o) { out += field_label(o.name) + ":"; },
        },
        seg);
  }
  return out;
}

Record parse_output(const ModuleSpec& module, const std::string& raw_completion) {
  if (trim(raw_completion).empty()) throw ParseError("empty completion for module '" + module.name + "'");
  const auto& fields = module.output_fields;
  std::vector<std::optional<std::string>> values(fields.size());
  std::string leading;
  int current = -1;

  for (const auto& line : split_lines(raw_completion)) {
    bool switched = false;
    for (std::size_t j = static_cast<std::size_t>(current + 1); j < fields.size(); ++j) {
      if (auto v = marker_value(line, fields[j].name)) {
        current = static_cast<int>(j);
        values[j] = *v;
        switched = true;
        break;
      }
    }
    if (switched) continue;
    std::string& target = current < 0 ? leading : *values[static_cast<std::size_t>(current)];
    if (current >= 0 || !target.empty()) target += '\n';
    target += line;
  }

  if (!values.empty() && !values[0] && !trim(leading).empty()) values[0] = leading;

  Record out;
  for (std::size_t j = 0; j < fields.size(); ++j) {
    if (!values[j]) {
      throw ParseError("module '" + module.name + "': output field '" + fields[j].name + "' not found");
    }
    out[fields[j].name] = trim(*values[j]);
  }
  return out;
}

ProgramRun run_program(const Program& program, const Assignment& assignment, const Record& input,
                       LmBackend& lm, std::uint64_t rng_seed) {
  ProgramRun run;
  std::vector<std::size_t> ordinals(program.modules.size(), 0);
  std::uint64_t call_index = 0;

  const ModuleInvoker invoke = [&](std::size_t module_index, const Record& inputs) -> Record {
    if (module_index >= program.modules.size()) {
      throw InvalidProgram("control flow invoked unknown module " + std::to_string(module_index));
    }
    const auto& module = program.modules[module_index];
    TraceCall call;
    call.module_index = module_index;
    call.invocation_ordinal = ordinals[module_index]++;
    call.rendered_prompt = render_prompt(module, assignment, {}, inputs);
    for (const auto& f : module.input_fields) {
      if (auto it = inputs.find(f); it != inputs.end()) call.inputs.insert(*it);
    }

    LmRequest request;
    request.model_id = lm.model_id();
    request.prompt = call.rendered_prompt;
    request.temperature = module.gen.temperature;
    request.max_tokens = module.gen.max_tokens;
    request.stop_sequences = module.gen.stop_sequences;
    request.seed = derive_seed(rng_seed, call_index++);
    call.raw_completion = complete(lm, request);

    try {
      call.parsed_outputs = parse_output(module, call.raw_completion);
    } catch (const ParseError& e) {
      call.parse_failed = true;
      run.trace.calls.push_back(std::move(call));
      throw ParseAbort{e.what()};
    }
    Record outputs = call.parsed_outputs;
    run.trace.calls.push_back(std::move(call));
    return outputs;
  };

  try {
    run.prediction.fields = program.control_flow(invoke, input);
  } catch (const ParseAbort& abort) {
    run.prediction.failed = true;
    run.prediction.error = abort.message;
  }
  return run;
}

nlohmann::json program_to_json(const Program& program) {
  nlohmann::json modules = nlohmann::json::array();
  for (const auto& m : program.modules) {
    nlohmann::json outputs = nlohmann::json::array();
    for (const auto& o : m.output_fields) outputs.push_back({{"name", o.name}, {"description", o.description}});
    modules.push_back({{"name", m.name},
                       {"input_fields", m.input_fields},
                       {"output_fields", outputs},
                       {"max_demos", m.max_demos},
                       {"seed_instruction", m.seed_instruction},
                       {"template", m.prompt.describe()}});
  }
  return {{"modules", modules}};
}

std::string program_pseudocode(const Program& program) {
  std::ostringstream os;
  for (const auto& m : program.modules) {
    os << "class " << field_label(m.name) << "Signature(Signature):\n";
    os << "    \"\"\"" << m.seed_instruction << "\"\"\"\n";
    for (const auto& f : m.input_fields) os << "    " << f << " = InputField()\n";
    for (const auto& f : m.output_fields) {
      os << "    " << f.name << " = OutputField(desc=\"" << f.description << "\")\n";
    }
    os << "\n";
  }
  os << "class Program(Module):\n    def __init__(self):\n";
  for (const auto& m : program.modules) {
    os << "        self." << m.name << " = Predict(" << field_label(m.name) << "Signature)\n";
  }
  os << "\n    def forward(self, **inputs):\n";
  os << "        # modules are composed by host control flow; each call fills its output fields\n";
  for (const auto& m : program.modules) {
    os << "        # " << m.name << "(";
    for (std::size_t i = 0; i < m.input_fields.size(); ++i) os << (i ? ", " : "") << m.input_fields[i];
    os << ") -> ";
    for (std::size_t i = 0; i < m.output_fields.size(); ++i) os << (i ? ", " : "") << m.output_fields[i].name;
    os << "\n";
  }
  return os.str();
}

}  // namespace promptforge
