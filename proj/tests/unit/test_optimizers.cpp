#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "../support.hpp"
#include "promptforge/optimizers.hpp"
#include "promptforge/synthetic.hpp"

using namespace promptforge;

namespace {

OptimizerRun run_synthetic(const SyntheticTask& t, const OptimizerConfig& c, const Budget& b, std::uint64_t seed) {
  return optimize(c, t.program, t.metric, t.dataset, b, {t.task_lm, t.proposer_lm, nullptr}, seed);
}

std::size_t count_kind(const OptimizerRun& r, TrialRecord::Kind k) {
  return static_cast<std::size_t>(
      std::count_if(r.trial_log.begin(), r.trial_log.end(), [&](const TrialRecord& t) { return t.kind == k; }));
}

}  // namespace

TEST_CASE("budget conversion") {
  CHECK(minibatch_trials_for(50, 500) == 320);
  CHECK(minibatch_trials_for(2, 500) == 0);
  CHECK(minibatch_trials_for(3, 100, 10, 5) == 4);
}

TEST_CASE("optimizer kind names") {
  CHECK(optimizer_kind_from_string("mipro") == OptimizerKind::MIPRO);
  for (auto k : all_optimizer_kinds()) CHECK(optimizer_kind_from_string(to_string(k)) == k);
  try {
    optimizer_kind_from_string("gradient_descent");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("zero_shot_mipro_pp") != std::string::npos);
  }
}

TEST_CASE("every optimizer evaluates the seed first and extracts soundly") {
  for (auto kind : all_optimizer_kinds()) {
    CAPTURE(to_string(kind));
    const auto t = make_synthetic(synthetic_suite("noisy-3x4"), 2);
    OptimizerConfig c;
    c.kind = kind;
    c.num_instruction_candidates = 4;
    c.proposals_per_step = 2;
    Budget b;
    b.max_trials = 12;
    b.minibatch_size = 25;
    b.full_eval_interval = 4;
    const auto r = run_synthetic(t, c, b, 1);
    REQUIRE_FALSE(r.trial_log.empty());
    CHECK(r.trial_log[0].kind == TrialRecord::Kind::Full);
    CHECK(r.trial_log[0].param_vector == ParamVector(6, 0));
    double best = -1;
    for (const auto& tr : r.trial_log) {
      if (tr.kind == TrialRecord::Kind::Full) best = std::max(best, tr.score);
    }
    CHECK(r.best_score_full == best);
    CHECK(r.best_score_full >= r.trial_log[0].score);
    // The extracted vector's exact score matches the oracle.
    CHECK(r.best_score_full == doctest::Approx(t.full_score(t.quality_vector(r.best_vector, r.candidates))));
  }
}

TEST_CASE("bootstrap random search returns the best demo set") {
  SyntheticTaskSpec spec;
  spec.modules = 1;
  spec.instruction_cardinality = {1};
  spec.demo_cardinality = {4};
  spec.base = 0.2;
  spec.demo_terms = {{0.0, 0.1, 0.5, 0.25}};
  spec.example_count = 200;
  const auto t = make_synthetic(spec, 5);
  OptimizerConfig c;
  c.kind = OptimizerKind::BootstrapRS;
  c.num_demo_sets = 8;
  c.max_demos = 2;
  Budget b;
  b.max_trials = 50;
  const auto r = run_synthetic(t, c, b, 3);
  CHECK(count_kind(r, TrialRecord::Kind::Full) == 8);

  // Brute force over the candidate sets.
  std::size_t best_set = 0;
  double best = -1;
  for (std::size_t s = 0; s < r.candidates.demo_sets.size(); ++s) {
    const double score = t.full_score(t.quality_vector({0, s}, r.candidates));
    if (score > best) {
      best = score;
      best_set = s;
    }
  }
  CHECK(r.best_vector == ParamVector{0, best_set});
  CHECK(r.best_score_full == doctest::Approx(best));

  OptimizerConfig single = c;
  single.num_demo_sets = 1;
  const auto only = run_synthetic(make_synthetic(spec, 5), single, b, 3);
  CHECK(only.trial_log.size() == 1);
  CHECK(only.best_vector == ParamVector{0, 0});
}

TEST_CASE("CA-OPRO: trial count, greedy monotonicity, separable optimum in one pass") {
  const auto t = make_synthetic(synthetic_suite("separable-2x6"), 1);
  OptimizerConfig c;
  c.kind = OptimizerKind::CaOPRO;
  c.ascent_passes = 1;
  c.proposals_per_step = 5;
  const auto r = run_synthetic(t, c, Budget{}, 0);
  CHECK(r.trial_log.size() == 1 * 2 * 5 + 1);
  CHECK(t.quality_vector(r.best_vector, r.candidates) == t.oracle_argmax());

  c.ascent_passes = 2;
  c.proposals_per_step = 3;
  const auto t2 = make_synthetic(synthetic_suite("interaction-2x4"), 1);
  const auto r2 = run_synthetic(t2, c, Budget{}, 0);
  CHECK(r2.trial_log.size() == 2 * 2 * 3 + 1);
  CHECK(t2.quality_vector(r2.best_vector, r2.candidates) == ParamVector{1, 0, 0, 0});
}

TEST_CASE("module OPRO feeds truncated, scored history to the proposer") {
  const auto t = make_synthetic(synthetic_suite("separable-2x6"), 1);
  OptimizerConfig c;
  c.kind = OptimizerKind::ModuleOPRO;
  c.max_history = 3;
  Budget b;
  b.max_trials = 8;
  const auto r = run_synthetic(t, c, b, 0);
  CHECK(r.trial_log.size() == 9);
  for (const auto& req : t.proposer_lm->call_log()) {
    std::size_t n = 0;
    for (auto p = req.prompt.find("Instruction #"); p != std::string::npos; p = req.prompt.find("Instruction #", p + 1)) ++n;
    CHECK(n <= 3);
  }
  OptimizerConfig ungrounded = c;
  ungrounded.grounding = false;
  const auto t2 = make_synthetic(synthetic_suite("separable-2x6"), 1);
  run_synthetic(t2, ungrounded, b, 0);
  for (const auto& req : t2.proposer_lm->call_log()) {
    CHECK(req.prompt.find("Program Code") == std::string::npos);
  }
}

TEST_CASE("program OPRO discards malformed rounds") {
  const auto t = make_synthetic(synthetic_suite("separable-2x6"), 1);
  OptimizerConfig c;
  c.kind = OptimizerKind::ProgramOPRO;
  Budget b;
  b.max_trials = 5;
  const auto good = run_synthetic(t, c, b, 0);
  CHECK(good.trial_log.size() == 6);
  CHECK(good.candidates.instructions[0].size() == 6);

  auto junk = std::make_shared<ScriptedLm>("no instructions here");
  const auto r = optimize(c, t.program, t.metric, t.dataset, b, {t.task_lm, junk, nullptr}, 0);
  CHECK(r.trial_log.size() == 1);
  CHECK(junk->call_count() >= 5);
}

TEST_CASE("MIPRO with full-size batches logs only full evaluations") {
  const auto t = make_synthetic(synthetic_suite("separable-2x6"), 1);
  OptimizerConfig c;
  c.num_instruction_candidates = 6;
  Budget b;
  b.max_trials = 20;
  b.minibatch_size = 500;
  b.full_eval_interval = 1;
  const auto r = run_synthetic(t, c, b, 4);
  CHECK(r.trial_log.size() == 21);
  CHECK(count_kind(r, TrialRecord::Kind::Minibatch) == 0);
  CHECK(r.space.params.size() == 4);
}

TEST_CASE("MIPRO minibatch schedule: checkpoints every S trials plus a final one") {
  const auto t = make_synthetic(synthetic_suite("noisy-3x4"), 1);
  OptimizerConfig c;
  c.kind = OptimizerKind::ZeroShotMIPRO;
  c.num_instruction_candidates = 4;
  Budget b;
  b.max_trials = 30;
  b.minibatch_size = 25;
  b.full_eval_interval = 10;
  const auto r = run_synthetic(t, c, b, 2);
  CHECK(count_kind(r, TrialRecord::Kind::Minibatch) == 30);
  const auto fulls = count_kind(r, TrialRecord::Kind::Full);
  CHECK(fulls >= 2);
  CHECK(fulls <= 1 + 3 + 1);
  std::size_t varying = 0;
  for (const auto& p : r.space.params) varying += p.cardinality > 1;
  CHECK(varying == 3);
}

TEST_CASE("MIPRO++ importance follows the proposer's dependence on theta") {
  const auto p = pf_test::qa_program();
  const auto d = pf_test::qa_dataset(40);
  auto task = std::make_shared<ScriptedLm>("wrong");
  task->on([](const LmRequest& r) -> std::optional<std::string> {
    if (r.prompt.rfind("GOOD", 0) != 0) return std::nullopt;
    const auto pos = r.prompt.rfind("What is item ");
    return "a" + std::to_string(std::stoul(r.prompt.substr(pos + 13)));
  });
  auto proposer = std::make_shared<ScriptedLm>("COMPLETE");
  proposer->on([](const LmRequest& r) -> std::optional<std::string> {
    if (r.prompt.find("summarize them") != std::string::npos) return "Numbered trivia questions.";
    if (r.prompt.find("Proposed Instruction:") != std::string::npos) {
      return r.prompt.find("Dataset Description:") != std::string::npos ? "GOOD: answer it." : "Answer it.";
    }
    static int observations = 0;
    return observations++ < 1 ? std::optional<std::string>("Questions about items.") : std::nullopt;
  });
  OptimizerConfig c;
  c.kind = OptimizerKind::ZeroShotMIPROpp;
  c.num_demo_sets = 1;
  c.tpe.n_startup = 40;  // uniform sampling keeps the design balanced
  Budget b;
  b.max_trials = 40;
  b.minibatch_size = 10;
  b.full_eval_interval = 10;
  const auto r = optimize(c, p, exact_match_metric(), d, b, {task, proposer, nullptr}, 8);
  CHECK(r.importance.at("use_dataset_summary") > 0.8);
  CHECK(r.best_score_full == 1.0);

  auto flat = std::make_shared<ScriptedLm>("Answer it.");
  const auto r2 = optimize(c, p, exact_match_metric(), d, b, {task, flat, nullptr}, 8);
  for (const auto& [_, v] : r2.importance) CHECK(v == 0.0);
}

TEST_CASE("MIPRO++ scores proposer failures as the seed program") {
  const auto p = pf_test::qa_program();
  const auto d = pf_test::qa_dataset(20);
  auto task = pf_test::qa_lm([](std::size_t k) { return k < 10; });
  auto broken = std::make_shared<ScriptedLm>("COMPLETE");
  broken->on([](const LmRequest& r) -> std::optional<std::string> {
    if (r.prompt.find("Proposed Instruction:") != std::string::npos) throw LmError(LmError::Kind::Network, "down");
    return std::nullopt;
  });
  OptimizerConfig c;
  c.kind = OptimizerKind::ZeroShotMIPROpp;
  Budget b;
  b.max_trials = 5;
  b.minibatch_size = 5;
  const auto r = optimize(c, p, exact_match_metric(), d, b, {task, broken, nullptr}, 0);
  CHECK(r.trial_log.size() == 6);
  for (std::size_t i = 1; i < r.trial_log.size(); ++i) {
    CHECK(r.trial_log[i].degraded);
    CHECK(r.trial_log[i].score == 0.5);
  }
}

TEST_CASE("call ceiling ends the run with the best result so far") {
  const auto t = make_synthetic(synthetic_suite("noisy-3x4"), 1);
  OptimizerConfig c;
  c.num_instruction_candidates = 4;
  Budget b;
  b.max_trials = 100;
  b.call_ceiling = 1500 + 12 + 200;
  const auto r = run_synthetic(t, c, b, 0);
  CHECK(r.budget_exhausted);
  CHECK(r.lm_calls <= *b.call_ceiling);
  CHECK(t.task_lm->call_count() + t.proposer_lm->call_count() <= *b.call_ceiling);

  Budget tiny = b;
  tiny.call_ceiling = 10;
  const auto t2 = make_synthetic(synthetic_suite("noisy-3x4"), 1);
  CHECK_THROWS_AS(run_synthetic(t2, c, tiny, 0), BudgetExhausted);
}

TEST_CASE("fixed seeds give identical logs") {
  OptimizerConfig c;
  c.num_instruction_candidates = 4;
  Budget b;
  b.max_trials = 25;
  const auto r1 = run_synthetic(make_synthetic(synthetic_suite("noisy-3x4"), 3), c, b, 9);
  const auto r2 = run_synthetic(make_synthetic(synthetic_suite("noisy-3x4"), 3), c, b, 9);
  REQUIRE(r1.trial_log.size() == r2.trial_log.size());
  for (std::size_t i = 0; i < r1.trial_log.size(); ++i) {
    CHECK(nlohmann::json(r1.trial_log[i]) == nlohmann::json(r2.trial_log[i]));
  }
}

TEST_CASE("running best is monotone") {
  std::vector<TrialRecord> log(4);
  log[0].kind = TrialRecord::Kind::Minibatch;
  log[0].score = 0.9;
  log[1].kind = TrialRecord::Kind::Full;
  log[1].score = 0.4;
  log[2].kind = TrialRecord::Kind::Full;
  log[2].score = 0.3;
  log[3].kind = TrialRecord::Kind::Full;
  log[3].score = 0.6;
  const auto rb = running_best_full(log);
  CHECK(std::isnan(rb[0]));
  CHECK(rb[1] == 0.4);
  CHECK(rb[2] == 0.4);
  CHECK(rb[3] == 0.6);
  CHECK(best_full_record(log) == 3);
}
