#include "promptforge/harness.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>

namespace promptforge {

namespace {

bool is_note(const std::string& key) { return key.rfind("_note", 0) == 0; }

/// Strict view of one JSON object: every key must be read or be a "_note".
class Fields {
 public:
  Fields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config field '" + where() + "' must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(key);
  }

  template <typename T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError("config field '" + child(key) + "' is required");
    return convert<T>(key);
  }

  const nlohmann::json& at(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!is_note(key) && !seen_.count(key)) throw ConfigError("config field '" + child(key) + "' is not recognized");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  template <typename T>
  T convert(const std::string& key) {
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("config field '" + child(key) + "' has the wrong type (" + e.what() + ")");
    }
  }

  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

BackendConfig parse_backend(const nlohmann::json& j, const std::string& path, const std::filesystem::path& base) {
  BackendConfig b;
  if (j.is_string()) {
    b.type = j.get<std::string>();
  } else {
    Fields f(j, path);
    b.type = f.get<std::string>("type", b.type);
    b.base_url = f.get<std::string>("base_url", b.base_url);
    b.endpoint = f.get<std::string>("endpoint", b.endpoint);
    b.model = f.get<std::string>("model", b.model);
    b.max_retries = f.get<int>("max_retries", b.max_retries);
    if (f.has("cache")) b.cache = resolve(base, f.require<std::string>("cache"));
    f.finish();
  }
  if (b.type != "synthetic" && b.type != "http" && b.type != "replay") {
    throw ConfigError("config field '" + path + ".type' must be one of synthetic, http, replay");
  }
  if (b.type == "replay" && !b.cache) throw ConfigError("config field '" + path + ".cache' is required for replay");
  return b;
}

nlohmann::ordered_json backend_to_json(const BackendConfig& b) {
  nlohmann::ordered_json j;
  j["type"] = b.type;
  if (b.type != "synthetic") {
    j["base_url"] = b.base_url;
    j["endpoint"] = b.endpoint;
    j["model"] = b.model;
    j["max_retries"] = b.max_retries;
  }
  if (b.cache) j["cache"] = b.cache->string();
  return j;
}

void parse_optimizer(Fields& f, OptimizerConfig& o) {
  o.kind = optimizer_kind_from_string(f.get<std::string>("kind", std::string(to_string(o.kind))));
  o.num_instruction_candidates = f.get<std::size_t>("num_instruction_candidates", o.num_instruction_candidates);
  o.num_demo_sets = f.get<std::size_t>("num_demo_sets", o.num_demo_sets);
  o.max_demos = f.get<std::size_t>("max_demos", o.max_demos);
  o.max_history = f.get<std::size_t>("max_history", o.max_history);
  o.ascent_passes = f.get<std::size_t>("ascent_passes", o.ascent_passes);
  o.proposals_per_step = f.get<std::size_t>("proposals_per_step", o.proposals_per_step);
  o.grounding = f.get<bool>("grounding", o.grounding);
  if (f.has("accept_threshold")) o.accept_threshold = f.require<double>("accept_threshold");
  o.max_bootstrap_examples = f.get<std::size_t>("max_bootstrap_examples", o.max_bootstrap_examples);
  o.split = f.get<std::string>("split", o.split);
  if (f.has("proposer")) {
    Fields p(f.at("proposer"), f.child("proposer"));
    o.theta.use_dataset_summary = p.get<bool>("use_dataset_summary", o.theta.use_dataset_summary);
    o.theta.use_program_summary = p.get<bool>("use_program_summary", o.theta.use_program_summary);
    o.theta.proposer_temperature = p.get<double>("temperature", o.theta.proposer_temperature);
    if (p.has("tip")) {
      const auto name = p.require<std::string>("tip");
      if (name != "random") o.theta.tip = tip_from_name(name);
    }
    p.finish();
  }
  if (f.has("tpe")) {
    Fields t(f.at("tpe"), f.child("tpe"));
    o.tpe.gamma = t.get<double>("gamma", o.tpe.gamma);
    o.tpe.n_startup = t.get<std::size_t>("n_startup", o.tpe.n_startup);
    o.tpe.n_ei_candidates = t.get<std::size_t>("n_ei_candidates", o.tpe.n_ei_candidates);
    o.tpe.prior_weight = t.get<double>("prior_weight", o.tpe.prior_weight);
    t.finish();
  }
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    const std::size_t upto = std::min<std::size_t>(e.byte, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < upto; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                      ": " + e.what());
  }

  RunConfig c;
  Fields root(doc, "");
  {
    Fields task(root.at("task"), "task");
    if (task.has("synthetic")) {
      try {
        c.synthetic = task.at("synthetic").get<SyntheticTaskSpec>();
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config field 'task.synthetic' is malformed (") + e.what() + ")");
      }
      c.synthetic->validate();
    }
    if (task.has("dataset")) c.dataset_path = resolve(base_dir, task.require<std::string>("dataset"));
    if (task.has("splits")) c.splits_path = resolve(base_dir, task.require<std::string>("splits"));
    c.task_seed = task.get<std::uint64_t>("task_seed", c.task_seed);
    task.finish();
    if (c.synthetic.has_value() == c.dataset_path.has_value()) {
      throw ConfigError("config field 'task' needs exactly one of 'synthetic' or 'dataset'");
    }
  }
  c.program = root.get<std::string>("program", c.synthetic ? "synthetic" : "qa");
  c.metric = root.get<std::string>("metric", c.metric);
  if (root.has("optimizer")) {
    Fields o(root.at("optimizer"), "optimizer");
    parse_optimizer(o, c.optimizer);
    o.finish();
  }
  if (root.has("budget")) {
    Fields b(root.at("budget"), "budget");
    c.budget.max_trials = b.get<std::size_t>("max_trials", c.budget.max_trials);
    c.budget.minibatch_size = b.get<std::size_t>("minibatch_size", c.budget.minibatch_size);
    c.budget.full_eval_interval = b.get<std::size_t>("full_eval_interval", c.budget.full_eval_interval);
    if (b.has("call_ceiling")) c.budget.call_ceiling = b.require<std::size_t>("call_ceiling");
    b.finish();
  }
  if (root.has("backends")) {
    Fields be(root.at("backends"), "backends");
    if (be.has("task_lm")) c.task_lm = parse_backend(be.at("task_lm"), "backends.task_lm", base_dir);
    if (be.has("proposer_lm")) c.proposer_lm = parse_backend(be.at("proposer_lm"), "backends.proposer_lm", base_dir);
    if (be.has("teacher_lm")) c.teacher_lm = parse_backend(be.at("teacher_lm"), "backends.teacher_lm", base_dir);
    be.finish();
  }
  c.seed = root.get<std::uint64_t>("seed", c.seed);
  c.parallelism = root.get<std::size_t>("parallelism", c.parallelism);
  if (root.has("output_dir")) c.output_dir = resolve(base_dir, root.require<std::string>("output_dir"));
  if (root.has("demo_store")) c.demo_store = resolve(base_dir, root.require<std::string>("demo_store"));
  root.finish();

  if (!c.synthetic) {
    for (const auto* b : {&c.task_lm, &c.proposer_lm}) {
      if (b->type == "synthetic") throw ConfigError("synthetic backends need a synthetic task");
    }
    make_registered_program(c.program);
  }
  make_registered_metric(c.metric);
  c.optimizer.validate();
  c.budget.validate();
  if (c.parallelism < 1) throw ConfigError("config field 'parallelism' must be >= 1");
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

nlohmann::ordered_json run_config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  nlohmann::ordered_json task;
  if (c.synthetic) {
    task["synthetic"] = nlohmann::json(*c.synthetic);
    task["task_seed"] = c.task_seed;
  } else {
    task["dataset"] = c.dataset_path->string();
    if (c.splits_path) task["splits"] = c.splits_path->string();
  }
  j["task"] = task;
  j["program"] = c.program;
  j["metric"] = c.metric;
  const auto& o = c.optimizer;
  nlohmann::ordered_json opt;
  opt["kind"] = std::string(to_string(o.kind));
  opt["num_instruction_candidates"] = o.num_instruction_candidates;
  opt["num_demo_sets"] = o.num_demo_sets;
  opt["max_demos"] = o.max_demos;
  opt["max_history"] = o.max_history;
  opt["ascent_passes"] = o.ascent_passes;
  opt["proposals_per_step"] = o.proposals_per_step;
  opt["grounding"] = o.grounding;
  if (o.accept_threshold) opt["accept_threshold"] = *o.accept_threshold;
  opt["max_bootstrap_examples"] = o.max_bootstrap_examples;
  opt["split"] = o.split;
  opt["proposer"] = {{"use_dataset_summary", o.theta.use_dataset_summary},
                     {"use_program_summary", o.theta.use_program_summary},
                     {"temperature", o.theta.proposer_temperature},
                     {"tip", o.theta.tip ? std::string(tip(*o.theta.tip).name) : std::string("random")}};
  opt["tpe"] = {{"gamma", o.tpe.gamma},
                {"n_startup", o.tpe.n_startup},
                {"n_ei_candidates", o.tpe.n_ei_candidates},
                {"prior_weight", o.tpe.prior_weight}};
  j["optimizer"] = opt;
  nlohmann::ordered_json budget;
  budget["max_trials"] = c.budget.max_trials;
  budget["minibatch_size"] = c.budget.minibatch_size;
  budget["full_eval_interval"] = c.budget.full_eval_interval;
  if (c.budget.call_ceiling) budget["call_ceiling"] = *c.budget.call_ceiling;
  j["budget"] = budget;
  nlohmann::ordered_json backends;
  backends["task_lm"] = backend_to_json(c.task_lm);
  backends["proposer_lm"] = backend_to_json(c.proposer_lm);
  if (c.teacher_lm) backends["teacher_lm"] = backend_to_json(*c.teacher_lm);
  j["backends"] = backends;
  j["seed"] = c.seed;
  j["parallelism"] = c.parallelism;
  j["output_dir"] = c.output_dir.string();
  if (c.demo_store) j["demo_store"] = c.demo_store->string();
  return j;
}

Program make_registered_program(const std::string& id) {
  Program p;
  if (id == "qa") {
    p.modules.push_back(make_module(0, "answer_question", {"question"}, {{"answer", "a short factoid answer"}},
                                    "Answer the question.", 4));
    p.control_flow = sequential_flow(1);
  } else if (id == "two_stage_qa") {
    p.modules.push_back(make_module(0, "draft_rationale", {"question"}, {{"rationale", "reasoning toward the answer"}},
                                    "Think step by step about the question.", 4));
    p.modules.push_back(make_module(1, "answer_question", {"question", "rationale"},
                                    {{"answer", "a short factoid answer"}}, "Answer the question using the rationale.",
                                    4));
    p.control_flow = sequential_flow(2);
  } else {
    throw ConfigError("unknown program '" + id + "' (valid: qa, two_stage_qa, or synthetic with a synthetic task)");
  }
  p.validate();
  return p;
}

Metric make_registered_metric(const std::string& id) {
  if (id == "exact_match") return exact_match_metric();
  if (id == "conditional_format") return conditional_format_metric();
  throw ConfigError("unknown metric '" + id + "' (valid: exact_match, conditional_format)");
}

namespace {

/// Serves only what a cache already holds.
class ReplayLm : public LmBackend {
 public:
  explicit ReplayLm(std::string model) : model_(std::move(model)) {}
  std::string generate(const LmRequest&) override {
    throw LmError(LmError::Kind::BadResponse, "replay backend: request not in cache");
  }
  std::string model_id() const override { return model_; }

 private:
  std::string model_;
};

std::shared_ptr<LmBackend> build_backend(const BackendConfig& b, const std::shared_ptr<LmBackend>& synthetic) {
  std::shared_ptr<LmBackend> lm;
  if (b.type == "synthetic") {
    if (!synthetic) throw ConfigError("synthetic backend requested without a synthetic task");
    lm = synthetic;
  } else if (b.type == "http") {
    HttpLmConfig hc;
    hc.base_url = b.base_url;
    if (hc.base_url.empty()) {
      if (const char* env = std::getenv("PROMPTFORGE_BASE_URL")) hc.base_url = env;
    }
    if (hc.base_url.empty()) throw ConfigError("http backend needs base_url or PROMPTFORGE_BASE_URL");
    hc.endpoint = b.endpoint;
    hc.model = b.model;
    hc.max_retries = b.max_retries;
    lm = std::make_shared<HttpLm>(hc);
  } else {
    lm = std::make_shared<ReplayLm>(b.model);
  }
  if (b.cache) lm = with_cache(lm, std::make_shared<CacheStore>(*b.cache));
  return lm;
}

void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

std::string vector_text(const ParamVector& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::to_string(v[i]);
  return out;
}

std::string format_number(double x) {
  if (std::isnan(x)) return "";
  std::ostringstream ss;
  ss << std::setprecision(10) << x;
  return ss.str();
}

}  // namespace

void write_run_directory(const std::filesystem::path& dir, const RunConfig& config, const OptimizerRun& run) {
  std::filesystem::create_directories(dir);
  write_json(dir / "config.json", run_config_to_json(config));

  nlohmann::ordered_json instr;
  auto modules = nlohmann::ordered_json::array();
  for (std::size_t m = 0; m < run.candidates.instructions.size(); ++m) {
    auto cands = nlohmann::ordered_json::array();
    const auto& list = run.candidates.instructions[m];
    for (std::size_t i = 0; i < list.size(); ++i) {
      nlohmann::ordered_json c;
      c["index"] = i;
      c["text"] = list[i].text;
      c["provenance"] = list[i].provenance;
      if (!list[i].theta.is_null()) c["theta"] = list[i].theta;
      cands.push_back(c);
    }
    modules.push_back({{"module_index", m}, {"candidates", cands}});
  }
  instr["modules"] = modules;
  auto sets = nlohmann::ordered_json::array();
  for (const auto& set : run.candidates.demo_sets) {
    auto per_module = nlohmann::ordered_json::array();
    for (const auto& demos : set) {
      auto ids = nlohmann::ordered_json::array();
      for (const auto& d : demos) ids.push_back(d.id());
      per_module.push_back(ids);
    }
    sets.push_back(per_module);
  }
  instr["demo_sets"] = sets;
  write_json(dir / "instructions.json", instr);

  write_json(dir / "summaries.json", {{"dataset_summary", run.candidates.dataset_summary},
                                      {"program_summary", run.candidates.program_summary}});
  run.candidates.demo_store.save(dir / "demos.jsonl");
  write_trial_log(dir / "trials.jsonl", run.trial_log);

  nlohmann::ordered_json best;
  best["vector"] = run.best_vector;
  best["score_full"] = run.best_score_full;
  nlohmann::ordered_json bindings;
  for (const auto& [var, text] : run.best_assignment.bindings()) bindings[var.to_string()] = text;
  best["assignment"] = bindings;
  best["budget_exhausted"] = run.budget_exhausted;
  best["lm_calls"] = run.lm_calls;
  write_json(dir / "best.json", best);

  if (config.optimizer.kind == OptimizerKind::ZeroShotMIPROpp) {
    nlohmann::ordered_json imp;
    for (const auto& p : run.space.params) imp[p.name] = run.importance.count(p.name) ? run.importance.at(p.name) : 0.0;
    write_json(dir / "importance.json", imp);
  }
}

RunOutcome run_from_config(const RunConfig& config) {
  std::optional<SyntheticTask> synth;
  Program program;
  Dataset dataset;
  Metric metric = make_registered_metric(config.metric);
  if (config.synthetic) {
    synth = make_synthetic(*config.synthetic, config.task_seed);
    program = synth->program;
    dataset = synth->dataset;
    metric = synth->metric;
  } else {
    program = make_registered_program(config.program);
    dataset = Dataset::load(*config.dataset_path, config.splits_path);
    dataset.validate();
  }

  LmBackends lms;
  lms.task = build_backend(config.task_lm, synth ? synth->task_lm : nullptr);
  lms.proposer = build_backend(config.proposer_lm, synth ? synth->proposer_lm : nullptr);
  if (config.teacher_lm) lms.teacher = build_backend(*config.teacher_lm, synth ? synth->task_lm : nullptr);

  OptimizeOptions options;
  options.parallelism = config.parallelism;
  if (config.demo_store) options.demo_store = DemoStore::load(*config.demo_store);

  RunOutcome outcome{optimize(config.optimizer, program, metric, dataset, config.budget, lms, config.seed, options),
                     config.output_dir};
  write_run_directory(config.output_dir, config, outcome.run);
  return outcome;
}

void write_report(const std::filesystem::path& run_dir, ReportFormat format) {
  const auto trials = read_trial_log(run_dir / "trials.jsonl");
  const auto running = running_best_full(trials);

  auto summary = [](const TrialRecord& t) {
    std::string s = "vector=" + vector_text(t.param_vector);
    if (t.proposer_hparams) s += "; theta=" + vector_text(*t.proposer_hparams);
    if (t.degraded) s += "; degraded";
    return s;
  };
  if (format == ReportFormat::Csv) {
    std::ofstream out(run_dir / "trials.csv");
    out << "trial_index,kind,score,running_best_full,params\n";
    for (std::size_t i = 0; i < trials.size(); ++i) {
      const auto& t = trials[i];
      out << t.trial_index << ',' << (t.kind == TrialRecord::Kind::Full ? "full" : "minibatch") << ','
          << format_number(t.score) << ',' << format_number(running[i]) << ",\"" << summary(t) << "\"\n";
    }
  } else {
    auto rows = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < trials.size(); ++i) {
      const auto& t = trials[i];
      nlohmann::ordered_json r;
      r["trial_index"] = t.trial_index;
      r["kind"] = t.kind == TrialRecord::Kind::Full ? "full" : "minibatch";
      r["score"] = t.score;
      r["running_best_full"] = std::isnan(running[i]) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(running[i]);
      r["params"] = summary(t);
      rows.push_back(r);
    }
    write_json(run_dir / "trials.json", rows);
  }

  // Progression: the instruction texts in force at each improvement event.
  std::vector<std::vector<std::string>> texts;
  if (std::ifstream in(run_dir / "instructions.json"); in) {
    const auto j = nlohmann::json::parse(in);
    for (const auto& m : j.at("modules")) {
      std::vector<std::string> list;
      for (const auto& c : m.at("candidates")) list.push_back(c.at("text").get<std::string>());
      texts.push_back(std::move(list));
    }
  }
  auto progression = nlohmann::ordered_json::array();
  double best = std::nan("");
  for (const auto& t : trials) {
    if (t.kind != TrialRecord::Kind::Full || (!std::isnan(best) && t.score <= best)) continue;
    best = t.score;
    nlohmann::ordered_json e;
    e["trial"] = t.trial_index;
    e["score"] = t.score;
    auto instructions = nlohmann::ordered_json::array();
    for (std::size_t m = 0; m < texts.size() && m < t.param_vector.size(); ++m) {
      const auto idx = t.param_vector[m];
      instructions.push_back(idx < texts[m].size() ? texts[m][idx] : "");
    }
    e["instructions"] = instructions;
    progression.push_back(e);
  }
  write_json(run_dir / "progression.json", progression);

  if (std::ifstream in(run_dir / "importance.json"); in) {
    const auto imp = nlohmann::ordered_json::parse(in);
    std::ofstream out(run_dir / "importance.csv");
    out << "parameter,importance\n";
    for (const auto& [k, v] : imp.items()) out << k << ',' << format_number(v.get<double>()) << '\n';
  }
}

void write_synthetic(const SyntheticTaskSpec& spec, std::uint64_t seed, const std::filesystem::path& out_dir) {
  const auto task = make_synthetic(spec, seed);
  std::filesystem::create_directories(out_dir);
  task.dataset.save(out_dir / "examples.jsonl", out_dir / "splits.json");
  write_json(out_dir / "spec.json", nlohmann::json(spec));
  nlohmann::ordered_json oracle;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& [v, s] : task.oracle_table()) {
    rows.push_back({{"vector", v}, {"quality", spec.quality(v)}, {"full_score", s}});
  }
  const auto best = task.oracle_argmax();
  oracle["seed"] = seed;
  oracle["argmax"] = best;
  oracle["argmax_score"] = task.full_score(best);
  oracle["vectors"] = rows;
  write_json(out_dir / "oracle.json", oracle);
}

int cli_main(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"promptforge: prompt optimization for multi-stage LM programs"};
  app.require_subcommand(1);

  std::string config_path, demo_store, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallelism;
  std::size_t repeat = 1;
  auto* opt = app.add_subcommand("optimize", "Run an optimizer from a config file");
  opt->add_option("--config", config_path, "Run config (JSON)")->required();
  opt->add_option("--seed", seed, "Override the config seed");
  opt->add_option("--parallelism", parallelism, "Evaluation threads");
  opt->add_option("--demo-store", demo_store, "Reuse a demos.jsonl instead of bootstrapping");
  opt->add_option("--out", out_dir, "Run directory");
  opt->add_option("--repeat", repeat, "Independent runs with seeds offset by run index")->check(CLI::PositiveNumber);

  std::string run_dir, format = "csv";
  auto* rep = app.add_subcommand("report", "Summarize a run directory");
  rep->add_option("run_dir", run_dir, "Run directory")->required();
  rep->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

  std::string spec_path, synth_out;
  std::uint64_t synth_seed = 0;
  auto* syn = app.add_subcommand("synth", "Write a synthetic task's dataset and oracle");
  syn->add_option("--spec", spec_path, "Synthetic spec (JSON, or a built-in suite name)")->required();
  syn->add_option("--out", synth_out, "Output directory")->required();
  syn->add_option("--seed", synth_seed, "Task seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*opt) {
      RunConfig config = load_run_config(config_path);
      if (seed) config.seed = *seed;
      if (parallelism) config.parallelism = *parallelism;
      if (!demo_store.empty()) config.demo_store = demo_store;
      if (!out_dir.empty()) config.output_dir = out_dir;
      int code = 0;
      const auto base_dir = config.output_dir;
      const auto base_seed = config.seed;
      for (std::size_t r = 0; r < repeat; ++r) {
        RunConfig rc = config;
        rc.seed = base_seed + r;
        if (repeat > 1) rc.output_dir = base_dir / ("run_" + std::to_string(r));
        const auto outcome = run_from_config(rc);
        out << "best full score: " << format_number(outcome.run.best_score_full) << "\n";
        out << "run directory: " << outcome.output_dir.string() << "\n";
        if (outcome.run.budget_exhausted) {
          err << "warning: call ceiling reached; returned the best fully evaluated program so far\n";
          code = 2;
        }
      }
      return code;
    }
    if (*rep) {
      write_report(run_dir, format == "json" ? ReportFormat::Json : ReportFormat::Csv);
      out << "report written to " << run_dir << "\n";
      return 0;
    }
    if (*syn) {
      SyntheticTaskSpec spec;
      if (std::filesystem::exists(spec_path)) {
        std::ifstream in(spec_path);
        try {
          spec = nlohmann::json::parse(in).get<SyntheticTaskSpec>();
        } catch (const nlohmann::json::exception& e) {
          throw ConfigError(std::string("synthetic spec: ") + e.what());
        }
      } else {
        spec = synthetic_suite(spec_path);
      }
      write_synthetic(spec, synth_seed, synth_out);
      out << "synthetic task written to " << synth_out << "\n";
      return 0;
    }
  } catch (const BudgetExhausted& e) {
    err << "error: call ceiling reached before any full evaluation: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace promptforge
