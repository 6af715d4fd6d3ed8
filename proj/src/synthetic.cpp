#include "promptforge/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <mutex>

namespace promptforge {

namespace {

constexpr std::string_view kQuestionPrefix = "Synthetic question ";

std::string module_name(std::size_t m) { return "stage" + std::to_string(m); }
std::string choice_field(std::size_t m) { return "choice_" + std::to_string(m); }

std::string variant_text(std::size_t m, std::size_t k) {
  return "Variant " + std::to_string(k) + ": complete stage " + std::to_string(m) + " of the task.";
}

std::string gold_answer(const std::string& id) { return id + " solved"; }

double unit_from_hash(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

std::size_t parse_number(std::string_view s, std::size_t pos) {
  std::size_t n = 0;
  while (pos < s.size() && std::isdigit(static_cast<unsigned char>(s[pos]))) n = n * 10 + (s[pos++] - '0');
  return n;
}

std::vector<std::string> split_blocks(const std::string& prompt) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = prompt.find("\n\n", start);
    if (pos == std::string::npos) {
      out.push_back(prompt.substr(start));
      return out;
    }
    out.push_back(prompt.substr(start, pos - start));
    start = pos + 2;
  }
}

/// Example id from a "Question: Synthetic question <id>" line.
std::string question_id(std::string_view block) {
  const auto pos = block.rfind(kQuestionPrefix);
  if (pos == std::string_view::npos) return "";
  const auto start = pos + kQuestionPrefix.size();
  auto end = block.find('\n', start);
  if (end == std::string_view::npos) end = block.size();
  return trim(block.substr(start, end - start));
}

}  // namespace

std::size_t instruction_variant(std::string_view instruction) {
  const auto pos = instruction.find("Variant ");
  if (pos == std::string_view::npos) return 0;
  return parse_number(instruction, pos + 8);
}

void SyntheticTaskSpec::validate() const {
  if (modules < 1) throw ConfigError("synthetic spec: modules must be >= 1");
  if (instruction_cardinality.size() != modules) {
    throw ConfigError("synthetic spec: instruction_cardinality needs one entry per module");
  }
  if (!demo_cardinality.empty() && demo_cardinality.size() != modules) {
    throw ConfigError("synthetic spec: demo_cardinality needs one entry per module");
  }
  for (std::size_t m = 0; m < modules; ++m) {
    if (instruction_card(m) < 1 || demo_card(m) < 1) throw ConfigError("synthetic spec: cardinalities must be >= 1");
  }
  auto check_terms = [&](const std::vector<std::vector<double>>& terms, bool demo, const char* what) {
    if (terms.empty()) return;
    if (terms.size() != modules) throw ConfigError(std::string("synthetic spec: ") + what + " needs one row per module");
    for (std::size_t m = 0; m < modules; ++m) {
      if (terms[m].size() != (demo ? demo_card(m) : instruction_card(m))) {
        throw ConfigError(std::string("synthetic spec: ") + what + " row " + std::to_string(m) +
                          " must match the module's cardinality");
      }
    }
  };
  check_terms(instruction_terms, false, "instruction_terms");
  check_terms(demo_terms, true, "demo_terms");
  for (const auto& p : interactions) {
    if (p.module_a >= modules || p.module_b >= modules || p.module_a == p.module_b) {
      throw ConfigError("synthetic spec: interaction modules out of range");
    }
    if (p.table.size() != instruction_card(p.module_a)) throw ConfigError("synthetic spec: interaction table rows");
    for (const auto& row : p.table) {
      if (row.size() != instruction_card(p.module_b)) throw ConfigError("synthetic spec: interaction table columns");
    }
  }
  if (example_count < 1) throw ConfigError("synthetic spec: example_count must be >= 1");
  const auto sp = space();
  if (sp.total_vectors() > 1'000'000) throw ConfigError("synthetic spec: space too large to enumerate");
  for (const auto& v : sp.enumerate()) {
    double q = base;
    for (std::size_t m = 0; m < modules; ++m) {
      if (!instruction_terms.empty()) q += instruction_terms[m][v[m]];
      if (!demo_terms.empty()) q += demo_terms[m][v[modules + m]];
    }
    for (const auto& p : interactions) q += p.table[v[p.module_a]][v[p.module_b]];
    if (q < -1e-12 || q > 1.0 + 1e-12) throw ConfigError("synthetic spec: quality outside [0, 1]");
  }
}

SearchSpace SyntheticTaskSpec::space() const {
  SearchSpace s;
  for (std::size_t m = 0; m < modules; ++m) {
    s.params.push_back({module_name(m) + ".instruction", instruction_card(m), ParamSpec::Kind::InstructionChoice, m});
  }
  for (std::size_t m = 0; m < modules; ++m) {
    s.params.push_back({module_name(m) + ".demos", demo_card(m), ParamSpec::Kind::DemoSetChoice, m});
  }
  return s;
}

double SyntheticTaskSpec::quality(const ParamVector& v) const {
  double q = base;
  for (std::size_t m = 0; m < modules; ++m) {
    if (!instruction_terms.empty()) q += instruction_terms[m][v.at(m)];
    if (!demo_terms.empty()) q += demo_terms[m][v.at(modules + m)];
  }
  for (const auto& p : interactions) q += p.table[v.at(p.module_a)][v.at(p.module_b)];
  return std::clamp(q, 0.0, 1.0);
}

void to_json(nlohmann::json& j, const SyntheticTaskSpec& s) {
  auto inter = nlohmann::json::array();
  for (const auto& p : s.interactions) {
    inter.push_back({{"modules", {p.module_a, p.module_b}}, {"table", p.table}});
  }
  j = {{"name", s.name},
       {"modules", s.modules},
       {"instruction_cardinality", s.instruction_cardinality},
       {"demo_cardinality", s.demo_cardinality},
       {"base", s.base},
       {"instruction_terms", s.instruction_terms},
       {"demo_terms", s.demo_terms},
       {"interactions", inter},
       {"example_count", s.example_count}};
}

void from_json(const nlohmann::json& j, SyntheticTaskSpec& s) {
  if (j.is_string()) {
    s = synthetic_suite(j.get<std::string>());
    return;
  }
  if (j.contains("suite")) {
    s = synthetic_suite(j.at("suite").get<std::string>());
    if (j.contains("example_count")) s.example_count = j.at("example_count").get<std::size_t>();
    return;
  }
  s = SyntheticTaskSpec{};
  s.name = j.value("name", std::string("custom"));
  s.modules = j.at("modules").get<std::size_t>();
  s.instruction_cardinality = j.at("instruction_cardinality").get<std::vector<std::size_t>>();
  s.demo_cardinality = j.value("demo_cardinality", std::vector<std::size_t>{});
  s.base = j.value("base", 0.0);
  s.instruction_terms = j.value("instruction_terms", std::vector<std::vector<double>>{});
  s.demo_terms = j.value("demo_terms", std::vector<std::vector<double>>{});
  if (j.contains("interactions")) {
    for (const auto& p : j.at("interactions")) {
      const auto mods = p.at("modules").get<std::vector<std::size_t>>();
      if (mods.size() != 2) throw ConfigError("synthetic spec: an interaction names exactly two modules");
      s.interactions.push_back({mods[0], mods[1], p.at("table").get<std::vector<std::vector<double>>>()});
    }
  }
  s.example_count = j.value("example_count", std::size_t{500});
}

SyntheticTaskSpec synthetic_suite(std::string_view name) {
  SyntheticTaskSpec s;
  s.name = std::string(name);
  if (name == "separable-2x6") {
    s.modules = 2;
    s.instruction_cardinality = {6, 6};
    s.base = 0.20;
    s.instruction_terms = {{0.00, 0.05, 0.10, 0.25, 0.15, 0.02}, {0.00, 0.08, 0.30, 0.12, 0.04, 0.18}};
  } else if (name == "interaction-2x4") {
    // Greedy coordinate ascent from (0, 0) stops at (1, 0) = 0.5; the optimum is (3, 3) = 0.8.
    s.modules = 2;
    s.instruction_cardinality = {4, 4};
    s.interactions = {{0, 1,
                       {{0.30, 0.35, 0.35, 0.30},
                        {0.50, 0.40, 0.30, 0.30},
                        {0.35, 0.30, 0.30, 0.30},
                        {0.35, 0.30, 0.30, 0.80}}}};
  } else if (name == "noisy-3x4") {
    s.modules = 3;
    s.instruction_cardinality = {4, 4, 4};
    // Graded terms 0.05 apart in every module; the optimum (2, 3, 1) = 0.75.
    s.base = 0.30;
    s.instruction_terms = {{0.00, 0.05, 0.15, 0.10}, {0.10, 0.05, 0.00, 0.15}, {0.05, 0.15, 0.00, 0.10}};
  } else {
    std::string valid;
    for (const auto& n : synthetic_suite_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw ConfigError("unknown synthetic suite '" + std::string(name) + "' (valid: " + valid + ")");
  }
  return s;
}

std::vector<std::string> synthetic_suite_names() { return {"separable-2x6", "interaction-2x4", "noisy-3x4"}; }

double SyntheticTask::full_score(const ParamVector& quality_vector) const {
  const double q = spec.quality(quality_vector);
  std::size_t correct = 0;
  for (double x : u) correct += x < q ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(u.size());
}

std::vector<std::pair<ParamVector, double>> SyntheticTask::oracle_table() const {
  std::vector<std::pair<ParamVector, double>> out;
  for (auto& v : spec.space().enumerate()) {
    const double s = full_score(v);
    out.emplace_back(std::move(v), s);
  }
  return out;
}

ParamVector SyntheticTask::oracle_argmax() const {
  const auto table = oracle_table();
  const auto it = std::max_element(table.begin(), table.end(),
                                   [](const auto& a, const auto& b) { return a.second < b.second; });
  return it->first;
}

namespace {

std::size_t demo_style(std::string_view example_id, std::uint64_t seed, std::size_t module, std::size_t card) {
  if (card <= 1 || example_id.empty()) return 0;
  return stable_hash(example_id, derive_seed(seed, module)) % card;
}

}  // namespace

ParamVector SyntheticTask::quality_vector(const ParamVector& program_vector, const CandidateTables& tables) const {
  const std::size_t m_count = spec.modules;
  ParamVector q(2 * m_count, 0);
  for (std::size_t m = 0; m < m_count; ++m) {
    q[m] = instruction_variant(tables.instructions.at(m).at(program_vector.at(m)).text) % spec.instruction_card(m);
    const auto& set = tables.demo_sets.at(program_vector.at(m_count + m));
    if (m < set.size() && !set[m].empty()) {
      q[m_count + m] = demo_style(set[m].front().source_example_id, seed, m, spec.demo_card(m));
    }
  }
  return q;
}

SyntheticTask make_synthetic(const SyntheticTaskSpec& spec_in, std::uint64_t seed) {
  spec_in.validate();
  SyntheticTask task;
  task.spec = spec_in;
  task.seed = seed;
  const auto& spec = task.spec;
  const std::size_t m_count = spec.modules;

  // Program: stage i sees the question and every earlier stage's choice tag.
  for (std::size_t m = 0; m < m_count; ++m) {
    std::vector<std::string> inputs = {"question"};
    for (std::size_t j = 0; j < m; ++j) inputs.push_back(choice_field(j));
    std::vector<OutputFieldSpec> outputs = {
        m + 1 == m_count ? OutputFieldSpec{"answer", "the final answer"}
                         : OutputFieldSpec{choice_field(m), "tag of the choices made so far"}};
    task.program.modules.push_back(make_module(m, module_name(m), std::move(inputs), std::move(outputs),
                                               variant_text(m, 0), spec.demo_card(m) > 1 ? 2 : 0));
  }
  task.program.control_flow = sequential_flow(m_count);
  task.program.validate();

  // Dataset and thresholds.
  std::vector<std::size_t> train;
  std::map<std::string, double> u_by_id;
  for (std::size_t k = 0; k < spec.example_count; ++k) {
    char id[32];
    std::snprintf(id, sizeof(id), "ex%04zu", k);
    Example e;
    e.id = id;
    e.inputs["question"] = std::string(kQuestionPrefix) + e.id;
    e.metadata["answer"] = gold_answer(e.id);
    const double u = unit_from_hash(stable_hash(e.id, seed));
    task.u.push_back(u);
    u_by_id[e.id] = u;
    task.dataset.examples.push_back(std::move(e));
    train.push_back(k);
  }
  task.dataset.splits["train"] = std::move(train);
  task.dataset.validate();
  task.metric = exact_match_metric();

  // Planted optimum must be unique in quality and in realized score.
  {
    const auto sp = spec.space();
    double best_q = -1.0;
    std::size_t best_count = 0;
    for (const auto& v : sp.enumerate()) {
      const double q = spec.quality(v);
      if (q > best_q + 1e-12) {
        best_q = q;
        best_count = 1;
      } else if (std::abs(q - best_q) <= 1e-12) {
        ++best_count;
      }
    }
    if (best_count != 1) throw NonUniqueArgmax("synthetic spec '" + spec.name + "' has a tied planted optimum");
    const auto table = task.oracle_table();
    double best_s = -1.0;
    for (const auto& [_, s] : table) best_s = std::max(best_s, s);
    if (std::count_if(table.begin(), table.end(), [&](const auto& e) { return e.second == best_s; }) != 1) {
      throw NonUniqueArgmax("synthetic task '" + spec.name + "' has a tied realized optimum for this seed");
    }
  }

  // Task LM: reads its stage from the output cue, the instruction variant from
  // the first block and the demo style from the first demo.
  auto spec_copy = std::make_shared<SyntheticTaskSpec>(spec);
  auto thresholds = std::make_shared<std::map<std::string, double>>(std::move(u_by_id));
  task.task_lm = std::make_shared<ScriptedLm>("", "synthetic-task");
  task.task_lm->on([spec_copy, thresholds, seed](const LmRequest& req) -> std::optional<std::string> {
    const auto& sp = *spec_copy;
    const auto blocks = split_blocks(req.prompt);
    if (blocks.size() < 2) return std::nullopt;
    const auto& last = blocks.back();
    const auto cue_pos = last.rfind('\n');
    const std::string cue = trim(cue_pos == std::string::npos ? last : last.substr(cue_pos + 1));
    std::size_t module;
    if (cue == "Answer:") {
      module = sp.modules - 1;
    } else if (starts_with_ci(cue, "Choice ")) {
      module = parse_number(cue, 7);
    } else {
      return std::nullopt;
    }
    if (module >= sp.modules) return std::nullopt;

    const std::size_t variant = instruction_variant(blocks.front()) % sp.instruction_card(module);
    const std::size_t style =
        blocks.size() > 2 ? demo_style(question_id(blocks[1]), seed, module, sp.demo_card(module)) : 0;
    const std::string tag = "v" + std::to_string(variant) + "s" + std::to_string(style);
    if (module + 1 < sp.modules) return tag;

    ParamVector q(2 * sp.modules, 0);
    q[module] = variant;
    q[sp.modules + module] = style;
    for (const auto& line : split_lines(last)) {
      if (!starts_with_ci(line, "Choice ")) continue;
      const std::size_t j = parse_number(line, 7);
      const auto vpos = line.find(": v");
      if (j >= module || vpos == std::string::npos) continue;
      q[j] = parse_number(line, vpos + 3) % sp.instruction_card(j);
      const auto spos = line.find('s', vpos + 3);
      if (spos != std::string::npos) q[sp.modules + j] = parse_number(line, spos + 1) % sp.demo_card(j);
    }
    const auto id = question_id(last);
    const auto it = thresholds->find(id);
    if (it == thresholds->end()) return "unsure";
    return it->second < sp.quality(q) ? gold_answer(id) : std::string("unsure");
  });

  // Proposer: cycles variants 1, 2, ... per module; everything else is canned.
  struct ProposerState {
    std::mutex mu;
    std::vector<std::size_t> counters;
  };
  auto state = std::make_shared<ProposerState>();
  state->counters.assign(m_count, 0);
  auto next_variant = [state, spec_copy](std::size_t m) {
    std::lock_guard lock(state->mu);
    return ++state->counters[m] % spec_copy->instruction_card(m);
  };
  task.proposer_lm = std::make_shared<ScriptedLm>("A staged synthetic pipeline.", "synthetic-proposer");
  task.proposer_lm->on([m_count, next_variant](const LmRequest& req) -> std::optional<std::string> {
    const auto& p = req.prompt;
    if (p.find("Respond with one line per module") != std::string::npos) {
      std::string out;
      for (std::size_t m = 0; m < m_count; ++m) {
        if (m) out += "\n";
        out += field_label(module_name(m) + "_instruction") + ": " + variant_text(m, next_variant(m));
      }
      // The prompt already ends with the first cue.
      return out.substr(out.find(':') + 2);
    }
    if (p.size() >= 21 && p.compare(p.size() - 21, 21, "Proposed Instruction:") == 0) {
      const auto pos = p.rfind("\n\nModule: stage");
      if (pos == std::string::npos) return std::nullopt;
      const std::size_t m = parse_number(p, pos + 15);
      if (m >= m_count) return std::nullopt;
      return variant_text(m, next_variant(m));
    }
    if (p.size() >= 13 && p.compare(p.size() - 13, 13, "Observations:") == 0) return std::string("COMPLETE");
    return std::nullopt;
  });
  return task;
}

}  // namespace promptforge
