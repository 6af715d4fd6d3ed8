// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "../oracles.hpp"
#include "../support.hpp"
#include "promptforge/harness.hpp"

using namespace promptforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << x;
  return s.str();
}

OptimizerRun run_on(const SyntheticTask& t, const OptimizerConfig& c, const Budget& b, std::uint64_t seed) {
  return optimize(c, t.program, t.metric, t.dataset, b, {t.task_lm, t.proposer_lm, nullptr}, seed);
}

Outcome planted_optimum() {
  const auto start = std::chrono::steady_clock::now();
  int hits = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto t = make_synthetic(synthetic_suite("separable-2x6"), s);
    OptimizerConfig c;
    c.num_instruction_candidates = 6;
    c.num_demo_sets = 1;  // the 36 instruction pairs
    Budget b;
    b.max_trials = 60;
    b.minibatch_size = t.dataset.split("train").size();
    b.full_eval_interval = 1;
    const auto r = run_on(t, c, b, s);
    hits += t.quality_vector(r.best_vector, r.candidates) == t.oracle_argmax();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {hits >= 19 && secs < 30, std::to_string(hits) + "/20 argmax, " + fmt(secs, 3) + " s"};
}

// Bootstrap-RS-style baseline: uniformly drawn program vectors, each fully
// evaluated, as many as fit in the example evaluations MIPRO spent.
double random_search_score(const SyntheticTask& t, const OptimizerRun& mipro, std::uint64_t seed) {
  std::size_t examples = 0;
  for (const auto& tr : mipro.trial_log) {
    examples += tr.kind == TrialRecord::Kind::Full ? t.dataset.examples.size() : tr.batch_example_ids.size();
  }
  const std::size_t draws = std::max<std::size_t>(1, examples / t.dataset.examples.size());
  Rng rng(seed);
  double best = t.full_score(t.quality_vector(ParamVector(mipro.best_vector.size(), 0), mipro.candidates));
  for (std::size_t i = 1; i < draws; ++i) {
    ParamVector v;
    for (const auto& p : mipro.space.params) v.push_back(rng.uniform_index(p.cardinality));
    best = std::max(best, t.full_score(t.quality_vector(v, mipro.candidates)));
  }
  return best;
}

Outcome surrogate_beats_random() {
  std::vector<double> mipro, random;
  int wins = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    OptimizerConfig c;
    Budget b;
    b.max_trials = 150;
    b.minibatch_size = 25;
    b.full_eval_interval = 10;
    const auto t = make_synthetic(synthetic_suite("noisy-3x4"), s);
    const auto m = run_on(t, c, b, s);
    mipro.push_back(m.best_score_full);
    random.push_back(random_search_score(t, m, derive_seed(s, 99)));
    wins += mipro.back() >= random.back();
  }
  std::vector<double> diff(20);
  for (std::size_t i = 0; i < 20; ++i) diff[i] = mipro[i] - random[i];
  std::nth_element(diff.begin(), diff.begin() + 10, diff.end());
  const double hi = diff[10];
  std::nth_element(diff.begin(), diff.begin() + 9, diff.end());
  const double median = (hi + diff[9]) / 2;
  double p = 1.0;
  try {
    p = wilcoxon_signed_rank(mipro, random).p_two_sided;
  } catch (const TooFewPairs&) {
  }
  return {wins >= 15 && median > 0 && p < 0.05,
          std::to_string(wins) + "/20 paired wins, median diff " + fmt(median) + ", p=" + fmt(p)};
}

Outcome interaction_separates() {
  int greedy_local = 0, mipro_global = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    OptimizerConfig ca;
    ca.kind = OptimizerKind::CaOPRO;
    ca.ascent_passes = 2;
    ca.proposals_per_step = 3;
    const auto t1 = make_synthetic(synthetic_suite("interaction-2x4"), s);
    const auto g = run_on(t1, ca, Budget{}, s);
    greedy_local += t1.quality_vector(g.best_vector, g.candidates) == ParamVector{1, 0, 0, 0};

    OptimizerConfig c;
    c.tpe.n_startup = 20;  // the optimum needs both modules' variant 3 at once
    Budget b;
    b.max_trials = 50;
    const auto t2 = make_synthetic(synthetic_suite("interaction-2x4"), s);
    const auto m = run_on(t2, c, b, s);
    mipro_global += t2.quality_vector(m.best_vector, m.candidates) == t2.oracle_argmax();
  }
  return {greedy_local == 20 && mipro_global >= 15,
          "CA-OPRO local optimum " + std::to_string(greedy_local) + "/20, MIPRO global " +
              std::to_string(mipro_global) + "/20"};
}

Outcome tpe_worked_example() {
  TpeSettings st;
  st.n_startup = 3;
  st.n_ei_candidates = 24;
  auto state = tpe_init(SearchSpace{{{"x", 2}}}, 1, st);
  tpe_observe(state, {0}, 0.9);
  tpe_observe(state, {1}, 0.1);
  tpe_observe(state, {1}, 0.2);
  const auto split = split_observations(state);
  const auto l = categorical_density(split.good, 0, state);
  const auto g = categorical_density(split.bad, 0, state);
  const bool dens = std::abs(l[0] - 0.75) < 1e-12 && std::abs(l[1] - 0.25) < 1e-12 &&
                    std::abs(g[0] - 1.0 / 6) < 1e-12 && std::abs(g[1] - 5.0 / 6) < 1e-12;
  Rng rng(2024);
  int a = 0;
  for (int i = 0; i < 1000; ++i) a += tpe_suggest(state, rng)[0] == 0;
  return {dens && a >= 950, std::string(dens ? "densities exact" : "density mismatch") + ", a chosen " +
                                std::to_string(a) + "/1000"};
}

Outcome minibatch_unbiased() {
  const auto p = pf_test::qa_program();
  const auto d = pf_test::qa_dataset(8);
  auto lm = pf_test::qa_lm([](std::size_t k) { return k % 3 != 1; });
  const auto all = d.split("train");
  const auto metric = exact_match_metric();
  const double full = evaluate(p, p.seed_assignment(), all, metric, *lm).score;
  const auto batches = pf_oracle::combinations(8, 3);
  double sum = 0;
  for (const auto& b : batches) {
    std::vector<Example> batch;
    for (auto i : b) batch.push_back(all[i]);
    sum += evaluate(p, p.seed_assignment(), batch, metric, *lm).score;
  }
  const double err = std::abs(sum / batches.size() - full);
  return {batches.size() == 56 && err < 1e-12, std::to_string(batches.size()) + " batches, |error| " + fmt(err)};
}

Outcome bootstrap_soundness() {
  Rng rng(77);
  std::size_t checked = 0;
  for (int task = 0; task < 40; ++task) {
    const std::size_t n = 10 + rng.uniform_index(30);
    std::vector<double> quality(n);
    for (auto& q : quality) q = static_cast<double>(rng.uniform_index(5)) / 4.0;  // 0, .25, ..., 1
    const auto p = pf_test::qa_program(3);
    const auto d = pf_test::qa_dataset(n);
    // The LM answers "a<k>:<quality>"; the metric reads the quality back.
    auto lm = std::make_shared<ScriptedLm>("a0:0");
    lm->on([quality](const LmRequest& r) -> std::optional<std::string> {
      const auto pos = r.prompt.rfind("What is item ");
      const std::size_t k = std::stoul(r.prompt.substr(pos + 13));
      return "a" + std::to_string(k) + ":" + fmt(quality[k]);
    });
    Metric graded{"graded", [](const Record& pred, const Example&) {
                    const auto& a = pred.at("answer");
                    return std::stod(a.substr(a.find(':') + 1));
                  }};
    BootstrapConfig cfg;
    cfg.accept_threshold = static_cast<double>(1 + rng.uniform_index(4)) / 4.0;
    cfg.max_demos = 1 + rng.uniform_index(3);
    cfg.num_candidate_sets = 1 + rng.uniform_index(5);
    cfg.rng_seed = rng.next();
    const bool any = std::any_of(quality.begin(), quality.end(), [&](double q) { return q >= cfg.accept_threshold; });
    try {
      const auto store = bootstrap_demos(p, d, graded, cfg, *lm);
      for (const auto& demo : store.for_module(0)) {
        const std::size_t k = std::stoul(demo.source_example_id.substr(1));
        if (quality[k] < cfg.accept_threshold || demo.source_score < cfg.accept_threshold) {
          return {false, "demo from " + demo.source_example_id + " below threshold"};
        }
        ++checked;
      }
    } catch (const NoDemosFound&) {
      if (any && cfg.max_source_examples >= n) return {false, "NoDemosFound despite an eligible example"};
    }
  }
  Metric zero{"zero", [](const Record&, const Example&) { return 0.0; }, true};
  auto lm = pf_test::qa_lm([](std::size_t) { return true; });
  bool raised = false;
  try {
    bootstrap_demos(pf_test::qa_program(2), pf_test::qa_dataset(20), zero, BootstrapConfig{}, *lm);
  } catch (const NoDemosFound&) {
    raised = true;
  }
  return {raised && checked > 0, std::to_string(checked) + " demos checked, zero metric " +
                                     (raised ? "raises NoDemosFound" : "did not raise")};
}

Outcome extraction_soundness() {
  Rng rng(5);
  for (int rep = 0; rep < 2000; ++rep) {
    std::vector<TrialRecord> log(1 + rng.uniform_index(60));
    bool any_full = false;
    for (std::size_t i = 0; i < log.size(); ++i) {
      log[i].trial_index = i;
      log[i].kind = rng.uniform01() < 0.3 ? TrialRecord::Kind::Full : TrialRecord::Kind::Minibatch;
      log[i].score = static_cast<double>(rng.uniform_index(11)) / 10.0;
      log[i].param_vector = {rng.uniform_index(4), rng.uniform_index(4)};
      any_full |= log[i].kind == TrialRecord::Kind::Full;
    }
    std::optional<std::size_t> expect;
    for (std::size_t i = 0; i < log.size(); ++i) {
      if (log[i].kind == TrialRecord::Kind::Full && (!expect || log[i].score > log[*expect].score)) expect = i;
    }
    try {
      if (best_full_record(log) != expect) return {false, "wrong record in fuzz case " + std::to_string(rep)};
    } catch (const NoEligibleVector&) {
      if (any_full) return {false, "NoEligibleVector with Full records"};
    }
    const auto rb = running_best_full(log);
    double prev = -1;
    for (double v : rb) {
      if (std::isnan(v)) continue;
      if (v < prev) return {false, "running best decreased"};
      prev = v;
    }
  }
  // Real runs: the returned vector is the best Full record's vector.
  for (auto kind : all_optimizer_kinds()) {
    OptimizerConfig c;
    c.kind = kind;
    c.num_instruction_candidates = 4;
    Budget b;
    b.max_trials = 20;
    const auto t = make_synthetic(synthetic_suite("noisy-3x4"), 4);
    const auto r = run_on(t, c, b, 4);
    const auto& best = r.trial_log[best_full_record(r.trial_log)];
    if (best.param_vector != r.best_vector || best.score != r.best_score_full) {
      return {false, std::string(to_string(kind)) + " returned a vector that is not the best Full record"};
    }
  }
  return {true, "2000 fuzzed logs and 8 optimizer runs consistent"};
}

Outcome budget_honesty() {
  Rng rng(31);
  std::size_t runs = 0, exhausted = 0;
  for (int rep = 0; rep < 48; ++rep) {
    const auto kind = all_optimizer_kinds()[rep % all_optimizer_kinds().size()];
    const auto suites = synthetic_suite_names();
    auto spec = synthetic_suite(suites[rng.uniform_index(suites.size())]);
    spec.example_count = 60 + rng.uniform_index(100);
    std::optional<SyntheticTask> t;
    try {
      t = make_synthetic(spec, rng.next() % 1000);
    } catch (const NonUniqueArgmax&) {
      continue;
    }
    OptimizerConfig c;
    c.kind = kind;
    c.num_instruction_candidates = 2 + rng.uniform_index(6);
    c.num_demo_sets = 1 + rng.uniform_index(6);
    c.max_demos = rng.uniform_index(4);
    c.proposals_per_step = 1 + rng.uniform_index(4);
    c.ascent_passes = 1 + rng.uniform_index(2);
    Budget b;
    b.max_trials = 5 + rng.uniform_index(40);
    b.minibatch_size = 5 + rng.uniform_index(30);
    b.full_eval_interval = 1 + rng.uniform_index(10);
    const std::size_t ceiling = 50 + rng.uniform_index(3000);
    b.call_ceiling = ceiling;
    try {
      const auto r = run_on(*t, c, b, rng.next());
      exhausted += r.budget_exhausted;
    } catch (const BudgetExhausted&) {
      ++exhausted;
    }
    const auto calls = t->task_lm->call_log().size() + t->proposer_lm->call_log().size();
    if (calls > ceiling) {
      return {false, std::string(to_string(kind)) + " made " + std::to_string(calls) + " calls over ceiling " +
                         std::to_string(ceiling)};
    }
    ++runs;
  }
  return {runs >= 40 && exhausted > 0,
          std::to_string(runs) + " fuzzed runs within ceiling, " + std::to_string(exhausted) + " hit it"};
}

Outcome wilcoxon_correct() {
  Rng rng(13);
  std::size_t exact_cases = 0;
  for (std::size_t n = 5; n <= 10; ++n) {
    for (int rep = 0; rep < 40; ++rep) {
      std::vector<double> a(n), b(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = static_cast<double>(rng.uniform_index(9));
        b[i] = static_cast<double>(rng.uniform_index(9));
      }
      try {
        const auto r = wilcoxon_signed_rank(a, b, WilcoxonMethod::Exact);
        if (r.p_two_sided != pf_oracle::wilcoxon_enumerated_p(a, b)) {
          return {false, "exact p differs from enumeration at n=" + std::to_string(n)};
        }
        ++exact_cases;
      } catch (const TooFewPairs&) {
      }
    }
  }
  double worst = 0;
  for (std::size_t n = 15; n <= 25; ++n) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> a(n), b(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.uniform01();
        b[i] = rng.uniform01() + 0.15 * rng.uniform01();
      }
      const double e = wilcoxon_signed_rank(a, b, WilcoxonMethod::Exact).p_two_sided;
      const double z = wilcoxon_signed_rank(a, b, WilcoxonMethod::Normal).p_two_sided;
      worst = std::max(worst, std::abs(e - z));
    }
  }
  return {exact_cases > 100 && worst <= 0.02, std::to_string(exact_cases) +
                                                  " exact cases equal enumeration, max normal error " + fmt(worst)};
}

Outcome budget_arithmetic() {
  const auto n = minibatch_trials_for(50, 500, 25, 10);
  return {n >= 280 && n <= 320, "F=50, |D|=500 -> " + std::to_string(n) + " minibatch trials"};
}

// --- criterion 11 ---------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "promptforge");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

std::string config_with_backends(const std::string& backends) {
  return R"({
  "task": {"synthetic": {"suite": "noisy-3x4"}, "task_seed": 3},
  "optimizer": {"kind": "mipro", "num_instruction_candidates": 4, "num_demo_sets": 4},
  "budget": {"max_trials": 20, "minibatch_size": 20, "full_eval_interval": 5},
  "backends": )" + backends + R"(,
  "seed": 11
})";
}

std::string http_backend(const std::string& type, const std::string& model, const fs::path& cache,
                         const std::string& url) {
  std::string s = R"({"type": ")" + type + R"(", "model": ")" + model + R"(", "cache": ")" + cache.string() + "\"";
  if (!url.empty()) s += R"(, "base_url": ")" + url + "\"";
  return s + "}";
}

Outcome end_to_end_determinism() {
  const auto dir = fs::temp_directory_path() / "promptforge_acceptance_e2e";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::ofstream(dir / "synthetic.json") << config_with_backends(R"({"task_lm": {"type": "synthetic"}})");
  if (cli({"optimize", "--config", (dir / "synthetic.json").string(), "--out", (dir / "a").string()}) != 0 ||
      cli({"optimize", "--config", (dir / "synthetic.json").string(), "--out", (dir / "b").string()}) != 0) {
    return {false, "synthetic run failed"};
  }
  const bool twice = slurp(dir / "a" / "trials.jsonl") == slurp(dir / "b" / "trials.jsonl");

  // A completions server backed by the synthetic task's scripted models.
  const auto served = make_synthetic(synthetic_suite("noisy-3x4"), 3);
  std::mutex mu;
  httplib::Server server;
  server.Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    LmRequest r;
    r.prompt = body.at("prompt").get<std::string>();
    r.temperature = body.at("temperature").get<double>();
    r.max_tokens = body.at("max_tokens").get<int>();
    r.seed = body.at("seed").get<std::uint64_t>();
    std::lock_guard lock(mu);
    auto& lm = body.at("model") == "proposer" ? *served.proposer_lm : *served.task_lm;
    res.set_content(nlohmann::json{{"choices", {{{"text", lm.generate(r)}}}}}.dump(), "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();
  const std::string url = "http://127.0.0.1:" + std::to_string(port);

  std::ofstream(dir / "http.json") << config_with_backends(
      "{\"task_lm\": " + http_backend("http", "task", dir / "task_cache.jsonl", url) +
      ", \"proposer_lm\": " + http_backend("http", "proposer", dir / "proposer_cache.jsonl", url) + "}");
  const int http_code = cli({"optimize", "--config", (dir / "http.json").string(), "--out", (dir / "http").string()});
  server.stop();
  worker.join();
  const auto served_calls = served.task_lm->call_count() + served.proposer_lm->call_count();
  if (http_code != 0) return {false, "http run failed"};

  std::ofstream(dir / "replay.json") << config_with_backends(
      "{\"task_lm\": " + http_backend("replay", "task", dir / "task_cache.jsonl", "") +
      ", \"proposer_lm\": " + http_backend("replay", "proposer", dir / "proposer_cache.jsonl", "") + "}");
  if (cli({"optimize", "--config", (dir / "replay.json").string(), "--out", (dir / "replay").string()}) != 0) {
    return {false, "replay run failed"};
  }
  const bool replayed = slurp(dir / "http" / "trials.jsonl") == slurp(dir / "replay" / "trials.jsonl") &&
                        slurp(dir / "http" / "best.json") == slurp(dir / "replay" / "best.json");
  return {twice && replayed && served_calls > 0,
          std::string("repeat run ") + (twice ? "byte-identical" : "differs") + ", cache replay of " +
              std::to_string(served_calls) + " served calls " + (replayed ? "identical" : "differs")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"planted-optimum recovery", planted_optimum},
      {"surrogate beats random under noise", surrogate_beats_random},
      {"interaction task separates methods", interaction_separates},
      {"TPE worked example", tpe_worked_example},
      {"minibatch unbiasedness", minibatch_unbiased},
      {"bootstrap soundness", bootstrap_soundness},
      {"extraction soundness", extraction_soundness},
      {"budget honesty", budget_honesty},
      {"Wilcoxon correctness", wilcoxon_correct},
      {"budget arithmetic", budget_arithmetic},
      {"end-to-end determinism", end_to_end_determinism},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
