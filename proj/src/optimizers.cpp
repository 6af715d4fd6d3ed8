#include "promptforge/optimizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace promptforge {

void Budget::validate() const {
  if (max_trials < 1) throw ConfigError("budget.max_trials must be >= 1");
  if (minibatch_size < 1) throw ConfigError("budget.minibatch_size must be >= 1");
  if (full_eval_interval < 1) throw ConfigError("budget.full_eval_interval must be >= 1");
}

std::size_t minibatch_trials_for(std::size_t full_evals, std::size_t split_size, std::size_t minibatch_size,
                                 std::size_t full_eval_interval) {
  if (minibatch_size < 1 || full_eval_interval < 1) throw std::invalid_argument("B and S must be >= 1");
  const std::size_t total = full_evals * split_size;
  auto cost = [&](std::size_t n) { return n * minibatch_size + (n / full_eval_interval + 2) * split_size; };
  if (cost(0) > total) return 0;
  // cost() is strictly increasing, so bisect for the last n that fits.
  std::size_t lo = 0, hi = total / minibatch_size + 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    if (cost(mid) <= total) {
      lo = mid;
    } else {
      hi = mid - 1;
    }
  }
  return lo;
}

namespace {

struct KindName {
  OptimizerKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {OptimizerKind::BootstrapRS, "bootstrap_rs"},
    {OptimizerKind::ModuleOPRO, "module_opro"},
    {OptimizerKind::ProgramOPRO, "program_opro"},
    {OptimizerKind::CaOPRO, "ca_opro"},
    {OptimizerKind::MIPRO, "mipro"},
    {OptimizerKind::ZeroShotMIPRO, "zero_shot_mipro"},
    {OptimizerKind::BayesianBootstrap, "bayesian_bootstrap"},
    {OptimizerKind::ZeroShotMIPROpp, "zero_shot_mipro_pp"},
};

}  // namespace

std::string_view to_string(OptimizerKind kind) {
  for (const auto& k : kKindNames) {
    if (k.kind == kind) return k.name;
  }
  return "unknown";
}

OptimizerKind optimizer_kind_from_string(std::string_view name) {
  std::string valid;
  for (const auto& k : kKindNames) {
    if (k.name == name) return k.kind;
    if (!valid.empty()) valid += ", ";
    valid += k.name;
  }
  throw ConfigError("unknown optimizer kind '" + std::string(name) + "' (valid kinds: " + valid + ")");
}

const std::vector<OptimizerKind>& all_optimizer_kinds() {
  static const std::vector<OptimizerKind> kinds = [] {
    std::vector<OptimizerKind> out;
    for (const auto& k : kKindNames) out.push_back(k.kind);
    return out;
  }();
  return kinds;
}

void OptimizerConfig::validate() const {
  if (num_instruction_candidates < 1) throw ConfigError("optimizer.num_instruction_candidates must be >= 1");
  if (num_demo_sets < 1) throw ConfigError("optimizer.num_demo_sets must be >= 1");
  if (max_history < 1) throw ConfigError("optimizer.max_history must be >= 1");
  if (kind == OptimizerKind::CaOPRO) {
    if (ascent_passes < 1) throw ConfigError("optimizer.ascent_passes must be >= 1");
    if (proposals_per_step < 1) throw ConfigError("optimizer.proposals_per_step must be >= 1");
  }
  if (accept_threshold && (*accept_threshold < 0.0 || *accept_threshold > 1.0)) {
    throw ConfigError("optimizer.accept_threshold must lie in [0, 1]");
  }
}

Assignment assignment_for(const Program& program, const CandidateTables& tables, const ParamVector& v) {
  const std::size_t m = program.modules.size();
  if (v.size() != 2 * m) throw OutOfSpace("program vector must have 2 entries per module");
  Assignment a;
  for (std::size_t i = 0; i < m; ++i) {
    a.bind(VariableId::instruction(i), tables.instructions.at(i).at(v[i]).text);
    const auto& set = tables.demo_sets.at(v[m + i]);
    if (i < set.size()) bind_demos(a, program, i, set[i]);
  }
  return a;
}

std::size_t best_full_record(std::span<const TrialRecord> trials) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < trials.size(); ++i) {
    if (trials[i].kind != TrialRecord::Kind::Full) continue;
    if (!best || trials[i].score > trials[*best].score) best = i;
  }
  if (!best) throw NoEligibleVector("trial log has no full evaluation");
  return *best;
}

std::vector<double> running_best_full(std::span<const TrialRecord> trials) {
  std::vector<double> out;
  out.reserve(trials.size());
  double best = std::numeric_limits<double>::quiet_NaN();
  for (const auto& t : trials) {
    if (t.kind == TrialRecord::Kind::Full && (std::isnan(best) || t.score > best)) best = t.score;
    out.push_back(best);
  }
  return out;
}

namespace {

enum Stream : std::uint64_t {
  kProposalStream = 1,
  kDemoStream,
  kTpeStream,
  kMinibatchStream,
  kEvalStream,
  kSummaryStream,
  kBootstrapStream,
};

constexpr double kTemperatureGrid[] = {0.2, 0.5, 0.7, 1.0, 1.4};
constexpr std::size_t kRepeatRedraws = 32;

class Session {
 public:
  Session(const OptimizerConfig& config, const Program& program, const Metric& metric, const Dataset& dataset,
          const Budget& budget, LmBackend& task, LmBackend& proposer, LmBackend& teacher, std::uint64_t seed,
          std::size_t parallelism, const std::optional<DemoStore>& demo_store, OptimizerRun& run)
      : config_(config),
        program_(program),
        metric_(metric),
        dataset_(dataset),
        budget_(budget),
        task_(task),
        proposer_(proposer),
        teacher_(teacher),
        seed_(seed),
        parallelism_(parallelism),
        preset_demos_(demo_store),
        run_(run),
        proposal_rng_(derive_seed(seed, kProposalStream)),
        minibatch_rng_(derive_seed(seed, kMinibatchStream)),
        eval_seed_(derive_seed(seed, kEvalStream)) {
    const auto it = dataset.splits.find(config.split);
    if (it == dataset.splits.end() || it->second.empty()) {
      throw DatasetError("split '" + config.split + "' is missing or empty");
    }
    for (std::size_t pos = 0; pos < it->second.size(); ++pos) {
      train_.push_back(dataset.examples.at(it->second[pos]));
      train_pos_[it->second[pos]] = pos;
    }
    auto& tables = run_.candidates;
    tables.instructions.resize(modules());
    for (std::size_t m = 0; m < modules(); ++m) {
      tables.instructions[m].push_back({m, program.modules[m].seed_instruction, "seed", nullptr});
    }
    tables.demo_sets.assign(1, DemoSet(modules()));
  }

  void run() {
    switch (config_.kind) {
      case OptimizerKind::BootstrapRS: bootstrap_rs(); break;
      case OptimizerKind::ModuleOPRO: module_opro(); break;
      case OptimizerKind::ProgramOPRO: program_opro(); break;
      case OptimizerKind::CaOPRO: ca_opro(); break;
      case OptimizerKind::MIPRO:
      case OptimizerKind::ZeroShotMIPRO:
      case OptimizerKind::BayesianBootstrap: mipro(); break;
      case OptimizerKind::ZeroShotMIPROpp: mipro_pp(); break;
    }
  }

 private:
  std::size_t modules() const { return program_.modules.size(); }
  ParamVector seed_vector() const { return ParamVector(2 * modules(), 0); }
  CandidateTables& tables() { return run_.candidates; }

  // -- evaluation --------------------------------------------------------

  /// Per-example scores of `v` on train positions `positions`, computing only
  /// those not seen before. Examples are seeded by id, so a score does not
  /// depend on which batch asked for it.
  std::vector<double> scores(const ParamVector& v, const std::vector<std::size_t>& positions) {
    auto& memo = memo_[v];
    if (memo.empty()) memo.assign(train_.size(), std::numeric_limits<double>::quiet_NaN());
    std::vector<Example> missing;
    std::vector<std::size_t> missing_pos;
    for (auto p : positions) {
      if (std::isnan(memo[p]) && std::find(missing_pos.begin(), missing_pos.end(), p) == missing_pos.end()) {
        missing.push_back(train_[p]);
        missing_pos.push_back(p);
      }
    }
    if (!missing.empty()) {
      const auto assignment = assignment_for(program_, tables(), v);
      const auto result = evaluate(program_, assignment, missing, metric_, task_, parallelism_, eval_seed_);
      for (std::size_t i = 0; i < missing_pos.size(); ++i) memo[missing_pos[i]] = result.per_example[i];
    }
    std::vector<double> out;
    out.reserve(positions.size());
    for (auto p : positions) out.push_back(memo[p]);
    return out;
  }

  static double mean(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
  }

  void log(TrialRecord record) {
    record.trial_index = run_.trial_log.size();
    run_.trial_log.push_back(std::move(record));
  }

  double full_eval(const ParamVector& v, std::optional<ParamVector> hparams = std::nullopt) {
    std::vector<std::size_t> all(train_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const double score = mean(scores(v, all));
    fully_evaluated_.insert(v);
    TrialRecord r;
    r.param_vector = v;
    r.score = score;
    r.kind = TrialRecord::Kind::Full;
    r.proposer_hparams = std::move(hparams);
    log(std::move(r));
    return score;
  }

  static ParamVector uniform_vector(const SearchSpace& space, Rng& rng) {
    ParamVector v;
    for (const auto& p : space.params) v.push_back(rng.uniform_index(p.cardinality));
    return v;
  }

  double minibatch_eval(const ParamVector& v, std::optional<ParamVector> hparams = std::nullopt) {
    if (budget_.minibatch_size >= train_.size()) return full_eval(v, std::move(hparams));
    const auto indices = sample_minibatch_indices(dataset_, config_.split, budget_.minibatch_size, minibatch_rng_);
    std::vector<std::size_t> positions;
    TrialRecord r;
    for (auto idx : indices) {
      positions.push_back(train_pos_.at(idx));
      r.batch_example_ids.push_back(dataset_.examples[idx].id);
    }
    r.param_vector = v;
    r.score = mean(scores(v, positions));
    r.kind = TrialRecord::Kind::Minibatch;
    r.proposer_hparams = std::move(hparams);
    const double score = r.score;
    log(std::move(r));
    return score;
  }

  /// Fully evaluates the best-mean minibatch vector among those not yet
  /// fully evaluated; vectors with an exact score need no second look.
  void checkpoint(const std::optional<ParamVector>& hparams_of_best = std::nullopt) {
    std::vector<TrialRecord> pending;
    for (const auto& t : run_.trial_log) {
      if (t.kind == TrialRecord::Kind::Minibatch && !fully_evaluated_.count(t.param_vector)) pending.push_back(t);
    }
    ParamVector best;
    try {
      best = best_mean_vector(pending, 1);
    } catch (const NoEligibleVector&) {
      return;
    }
    std::optional<ParamVector> hp = hparams_of_best;
    if (!hp) {
      for (const auto& t : run_.trial_log) {
        if (t.param_vector == best && t.proposer_hparams) hp = t.proposer_hparams;
      }
    }
    full_eval(best, hp);
  }

  // -- initialization helpers ---------------------------------------------

  void summarize() {
    try {
      tables().dataset_summary =
          summarize_dataset(dataset_, proposer_, {10, 25, 5, config_.split}, derive_seed(seed_, kSummaryStream));
    } catch (const LmError&) {
      tables().dataset_summary.clear();
    }
    try {
      tables().program_summary = summarize_program(program_, proposer_, derive_seed(seed_, kSummaryStream + 100));
    } catch (const LmError&) {
      tables().program_summary.clear();
    }
  }

  GroundingContext grounding(bool enabled) const {
    GroundingContext ctx;
    if (enabled) {
      ctx.dataset_description = run_.candidates.dataset_summary;
      ctx.program_code = program_pseudocode(program_);
      ctx.program_description = run_.candidates.program_summary;
    }
    return ctx;
  }

  void bootstrap_sets() {
    std::size_t slots = 0;
    for (const auto& m : program_.modules) slots = std::max(slots, m.max_demos);
    const std::size_t k = std::min(config_.max_demos, slots);
    if (k == 0 || config_.num_demo_sets <= 1) return;
    BootstrapConfig bc;
    bc.accept_threshold = config_.accept_threshold.value_or(default_accept_threshold(metric_));
    bc.max_demos = k;
    bc.num_candidate_sets = config_.num_demo_sets - 1;
    bc.max_source_examples = config_.max_bootstrap_examples;
    bc.rng_seed = derive_seed(seed_, kBootstrapStream);
    bc.split = config_.split;
    if (preset_demos_) {
      tables().demo_store = *preset_demos_;
    } else {
      try {
        tables().demo_store = bootstrap_demos(program_, dataset_, metric_, bc, teacher_);
      } catch (const NoDemosFound&) {
        return;  // zero-shot only
      }
    }
    if (tables().demo_store.empty()) return;
    Rng rng(derive_seed(seed_, kDemoStream));
    tables().demo_sets = sample_demo_sets(tables().demo_store, modules(), k, config_.num_demo_sets, rng);
  }

  std::size_t add_instruction(std::size_t m, std::string text, std::string provenance, nlohmann::json theta) {
    auto& list = tables().instructions[m];
    list.push_back({m, std::move(text), std::move(provenance), std::move(theta)});
    return list.size() - 1;
  }

  ProposalHyperparameters opro_theta() const {
    ProposalHyperparameters th = config_.theta;
    th.tip = TipKey::None;
    th.demo_set_choice = 0;
    th.max_history = config_.max_history;
    th.use_dataset_summary = th.use_program_summary = config_.grounding;
    return th;
  }

  using History = std::vector<std::pair<std::string, double>>;

  void push_history(History& h, std::string text, double score) const {
    h.emplace_back(std::move(text), score);
    std::stable_sort(h.begin(), h.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (h.size() > config_.max_history) h.resize(config_.max_history);
  }

  // -- optimizers -----------------------------------------------------------

  void bootstrap_rs() {
    bootstrap_sets();
    full_eval(seed_vector());
    const std::size_t sets = tables().demo_sets.size();
    for (std::size_t s = 1; s < sets && s <= budget_.max_trials; ++s) {
      ParamVector v = seed_vector();
      for (std::size_t m = 0; m < modules(); ++m) v[modules() + m] = s;
      full_eval(v);
    }
  }

  void module_opro() {
    if (config_.grounding) summarize();
    const auto base = grounding(config_.grounding);
    const auto theta = opro_theta();
    ParamVector cur = seed_vector();
    const double r0 = full_eval(cur);
    std::vector<History> hist(modules());
    for (std::size_t m = 0; m < modules(); ++m) push_history(hist[m], tables().instructions[m][0].text, r0);

    for (std::size_t round = 0; round < budget_.max_trials; ++round) {
      ParamVector next = cur;
      for (std::size_t m = 0; m < modules(); ++m) {
        auto ctx = base;
        ctx.previous_instructions = hist[m];
        if (auto text = propose_one(program_, m, ctx, theta, tables().demo_sets, proposer_, proposal_rng_)) {
          next[m] = add_instruction(m, *text, "trial:" + std::to_string(run_.trial_log.size()), theta.to_json());
        }
      }
      const double r = full_eval(next);
      // Equal credit: every module's current instruction receives the global score.
      for (std::size_t m = 0; m < modules(); ++m) push_history(hist[m], tables().instructions[m][next[m]].text, r);
      cur = next;
    }
  }

  void program_opro() {
    if (config_.grounding) summarize();
    std::optional<std::string> ds, pd;
    if (config_.grounding) {
      ds = tables().dataset_summary;
      pd = tables().program_summary;
    }
    std::vector<JointHistoryEntry> hist;
    {
      JointHistoryEntry seed_entry;
      for (std::size_t m = 0; m < modules(); ++m) seed_entry.instructions.push_back(tables().instructions[m][0].text);
      seed_entry.score = full_eval(seed_vector());
      hist.push_back(std::move(seed_entry));
    }
    for (std::size_t round = 0; round < budget_.max_trials; ++round) {
      auto props = propose_program(program_, hist, ds, pd, TipKey::None, config_.theta.proposer_temperature,
                                   proposer_, proposal_rng_);
      if (!props) continue;  // discarded round
      ParamVector v = seed_vector();
      const auto provenance = "trial:" + std::to_string(run_.trial_log.size());
      for (std::size_t m = 0; m < modules(); ++m) v[m] = add_instruction(m, (*props)[m], provenance, nullptr);
      hist.push_back({*props, full_eval(v)});
      std::stable_sort(hist.begin(), hist.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
      if (hist.size() > config_.max_history) hist.resize(config_.max_history);
    }
  }

  void ca_opro() {
    if (config_.grounding) summarize();
    const auto base = grounding(config_.grounding);
    const auto theta = opro_theta();
    ParamVector cur = seed_vector();
    double cur_score = full_eval(cur);
    std::vector<History> hist(modules());
    for (std::size_t m = 0; m < modules(); ++m) push_history(hist[m], tables().instructions[m][0].text, cur_score);

    for (std::size_t pass = 0; pass < config_.ascent_passes; ++pass) {
      for (std::size_t m = 0; m < modules(); ++m) {
        ParamVector best = cur;
        double best_score = cur_score;
        for (std::size_t n = 0; n < config_.proposals_per_step; ++n) {
          auto ctx = base;
          ctx.previous_instructions = hist[m];
          auto text = propose_one(program_, m, ctx, theta, tables().demo_sets, proposer_, proposal_rng_);
          if (!text) continue;
          ParamVector cand = cur;
          cand[m] = add_instruction(m, *text, "trial:" + std::to_string(run_.trial_log.size()), theta.to_json());
          const double s = full_eval(cand);
          push_history(hist[m], *text, s);
          if (s > best_score) {
            best = cand;
            best_score = s;
          }
        }
        cur = best;
        cur_score = best_score;
      }
    }
  }

  void mipro() {
    const bool tune_instructions = config_.kind != OptimizerKind::BayesianBootstrap;
    const bool tune_demos = config_.kind != OptimizerKind::ZeroShotMIPRO;
    if (tune_demos) bootstrap_sets();
    if (tune_instructions && config_.num_instruction_candidates > 1) {
      if (config_.theta.use_dataset_summary || config_.theta.use_program_summary) summarize();
      const auto base = grounding(true);
      for (std::size_t m = 0; m < modules(); ++m) {
        auto res = propose_instructions(program_, m, config_.num_instruction_candidates, base, config_.theta,
                                        tables().demo_sets, proposer_, proposal_rng_);
        tables().instructions[m] = std::move(res.candidates);
      }
    }

    SearchSpace space;
    for (std::size_t m = 0; m < modules(); ++m) {
      space.params.push_back({program_.modules[m].name + ".instruction", tables().instructions[m].size(),
                              ParamSpec::Kind::InstructionChoice, m});
    }
    for (std::size_t m = 0; m < modules(); ++m) {
      space.params.push_back(
          {program_.modules[m].name + ".demos", tables().demo_sets.size(), ParamSpec::Kind::DemoSetChoice, m});
    }
    run_.space = space;

    full_eval(seed_vector());
    auto state = tpe_init(space, derive_seed(seed_, kTpeStream), config_.tpe);
    Rng tpe_rng(state.rng_seed);
    // Full-split trials are deterministic, so a repeat carries no information:
    // redraw, then fall back to a uniform unevaluated vector.
    const bool full_batches = budget_.minibatch_size >= train_.size();
    for (std::size_t i = 0; i < budget_.max_trials; ++i) {
      auto v = tpe_suggest(state, tpe_rng);
      for (std::size_t r = 0; full_batches && r < kRepeatRedraws && fully_evaluated_.count(v); ++r) {
        v = r + 1 < kRepeatRedraws / 2 ? tpe_suggest(state, tpe_rng) : uniform_vector(space, tpe_rng);
      }
      tpe_observe(state, v, minibatch_eval(v));
      if ((i + 1) % budget_.full_eval_interval == 0) checkpoint();
    }
    checkpoint();
  }

  void mipro_pp() {
    summarize();
    bootstrap_sets();
    const auto base = grounding(true);

    SearchSpace space;
    space.params = {
        {"use_dataset_summary", 2, ParamSpec::Kind::ProposerHparam, 0},
        {"use_program_summary", 2, ParamSpec::Kind::ProposerHparam, 0},
        {"proposer_temperature", std::size(kTemperatureGrid), ParamSpec::Kind::ProposerHparam, 0},
        {"tip", all_tips().size(), ParamSpec::Kind::ProposerHparam, 0},
        {"demo_view", tables().demo_sets.size(), ParamSpec::Kind::ProposerHparam, 0},
    };
    run_.space = space;

    const double seed_score = full_eval(seed_vector());
    auto state = tpe_init(space, derive_seed(seed_, kTpeStream), config_.tpe);
    Rng tpe_rng(state.rng_seed);
    for (std::size_t i = 0; i < budget_.max_trials; ++i) {
      const auto th = tpe_suggest(state, tpe_rng);
      ProposalHyperparameters theta = config_.theta;
      theta.use_dataset_summary = th[0] == 1;
      theta.use_program_summary = th[1] == 1;
      theta.proposer_temperature = kTemperatureGrid[th[2]];
      theta.tip = all_tips()[th[3]].key;
      theta.demo_set_choice = th[4];

      std::vector<std::string> texts;
      for (std::size_t m = 0; m < modules(); ++m) {
        auto text = propose_one(program_, m, base, theta, tables().demo_sets, proposer_, proposal_rng_);
        if (!text) break;
        texts.push_back(std::move(*text));
      }
      double score;
      if (texts.size() != modules()) {
        // Proposer failure: score the trial as the seed program.
        TrialRecord r;
        r.param_vector = seed_vector();
        r.score = seed_score;
        r.kind = TrialRecord::Kind::Minibatch;
        r.proposer_hparams = th;
        r.degraded = true;
        log(std::move(r));
        score = seed_score;
      } else {
        ParamVector v = seed_vector();
        const auto provenance = "trial:" + std::to_string(run_.trial_log.size());
        for (std::size_t m = 0; m < modules(); ++m) v[m] = add_instruction(m, texts[m], provenance, theta.to_json());
        score = minibatch_eval(v, th);
      }
      tpe_observe(state, th, score);
      if ((i + 1) % budget_.full_eval_interval == 0) checkpoint();
    }
    checkpoint();
    run_.importance = param_importance(space, run_.trial_log);
  }

  const OptimizerConfig& config_;
  const Program& program_;
  const Metric& metric_;
  const Dataset& dataset_;
  const Budget& budget_;
  LmBackend& task_;
  LmBackend& proposer_;
  LmBackend& teacher_;
  std::uint64_t seed_;
  std::size_t parallelism_;
  const std::optional<DemoStore>& preset_demos_;
  OptimizerRun& run_;

  Rng proposal_rng_;
  Rng minibatch_rng_;
  std::uint64_t eval_seed_;
  std::vector<Example> train_;
  std::map<std::size_t, std::size_t> train_pos_;
  std::map<ParamVector, std::vector<double>> memo_;
  std::set<ParamVector> fully_evaluated_;
};

}  // namespace

OptimizerRun optimize(const OptimizerConfig& config, const Program& program, const Metric& metric,
                      const Dataset& dataset, const Budget& budget, const LmBackends& lms, std::uint64_t seed,
                      const OptimizeOptions& options) {
  config.validate();
  budget.validate();
  program.validate();
  if (!lms.task || !lms.proposer) throw ConfigError("optimize: task and proposer LMs are required");

  auto call_budget = options.call_budget ? options.call_budget : std::make_shared<CallBudget>(budget.call_ceiling);
  BudgetedLm task(lms.task, call_budget);
  BudgetedLm proposer(lms.proposer, call_budget);
  BudgetedLm teacher(lms.teacher ? lms.teacher : lms.task, call_budget);

  OptimizerRun run;
  run.seed = seed;
  Session session(config, program, metric, dataset, budget, task, proposer, teacher, seed, options.parallelism,
                  options.demo_store, run);
  try {
    session.run();
  } catch (const BudgetExhausted&) {
    run.budget_exhausted = true;
    bool any_full = std::any_of(run.trial_log.begin(), run.trial_log.end(),
                                [](const TrialRecord& t) { return t.kind == TrialRecord::Kind::Full; });
    if (!any_full) throw;
  }
  run.lm_calls = call_budget->used();

  const auto best = best_full_record(run.trial_log);
  run.best_vector = run.trial_log[best].param_vector;
  run.best_score_full = run.trial_log[best].score;
  run.best_assignment = assignment_for(program, run.candidates, run.best_vector);
  return run;
}

}  // namespace promptforge
