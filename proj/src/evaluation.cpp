#include "promptforge/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace promptforge {

namespace {

std::string json_to_field(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

Record record_from_json(const nlohmann::json& obj) {
  Record r;
  if (obj.is_null()) return r;
  for (auto it = obj.begin(); it != obj.end(); ++it) r[it.key()] = json_to_field(it.value());
  return r;
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

void Dataset::validate() const {
  std::set<std::string> ids;
  for (const auto& e : examples) {
    if (!ids.insert(e.id).second) throw DatasetError("duplicate example id '" + e.id + "'");
  }
  std::map<std::size_t, std::string> owner;
  for (const auto& [name, indices] : splits) {
    for (auto i : indices) {
      if (i >= examples.size()) throw DatasetError("split '" + name + "' index out of range");
      auto [it, inserted] = owner.emplace(i, name);
      if (!inserted && it->second != name) {
        throw DatasetError("example '" + examples[i].id + "' is in splits '" + it->second +
                           "' and '" + name + "'");
      }
      if (!inserted) throw DatasetError("example '" + examples[i].id + "' repeated in split '" + name + "'");
    }
  }
}

std::vector<Example> Dataset::split(const std::string& name) const {
  const auto it = splits.find(name);
  if (it == splits.end()) throw DatasetError("unknown split '" + name + "'");
  std::vector<Example> out;
  out.reserve(it->second.size());
  for (auto i : it->second) out.push_back(examples[i]);
  return out;
}

std::size_t Dataset::split_size(const std::string& name) const {
  const auto it = splits.find(name);
  return it == splits.end() ? 0 : it->second.size();
}

Dataset Dataset::load(const std::filesystem::path& examples_path,
                      const std::optional<std::filesystem::path>& splits_path) {
  std::ifstream in(examples_path);
  if (!in) throw DatasetError("cannot open dataset '" + examples_path.string() + "'");
  Dataset d;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      Example e;
      e.id = json_to_field(j.at("id"));
      e.inputs = record_from_json(j.at("inputs"));
      e.metadata = record_from_json(j.value("metadata", nlohmann::json::object()));
      d.examples.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw DatasetError(examples_path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }

  if (splits_path) {
    std::ifstream sin(*splits_path);
    if (!sin) throw DatasetError("cannot open splits '" + splits_path->string() + "'");
    std::map<std::string, std::size_t> by_id;
    for (std::size_t i = 0; i < d.examples.size(); ++i) by_id[d.examples[i].id] = i;
    const auto j = nlohmann::json::parse(sin);
    for (auto it = j.begin(); it != j.end(); ++it) {
      auto& indices = d.splits[it.key()];
      for (const auto& id : it.value()) {
        const auto found = by_id.find(json_to_field(id));
        if (found == by_id.end()) {
          throw DatasetError("split '" + it.key() + "' references unknown id " + id.dump());
        }
        indices.push_back(found->second);
      }
    }
  } else {
    auto& train = d.splits["train"];
    for (std::size_t i = 0; i < d.examples.size(); ++i) train.push_back(i);
  }
  d.validate();
  return d;
}

void Dataset::save(const std::filesystem::path& examples_path,
                   const std::filesystem::path& splits_path) const {
  std::ofstream out(examples_path);
  for (const auto& e : examples) {
    out << nlohmann::json{{"id", e.id}, {"inputs", e.inputs}, {"metadata", e.metadata}}.dump() << '\n';
  }
  nlohmann::json sj = nlohmann::json::object();
  for (const auto& [name, indices] : splits) {
    auto arr = nlohmann::json::array();
    for (auto i : indices) arr.push_back(examples[i].id);
    sj[name] = arr;
  }
  std::ofstream(splits_path) << sj.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

double Metric::operator()(const Prediction& prediction, const Example& example) const {
  if (prediction.failed) return 0.0;
  const double s = scorer(prediction.fields, example);
  if (!(s > 0.0)) return 0.0;
  return s > 1.0 ? 1.0 : s;
}

std::string normalize_answer(std::string_view text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (uc < 128 && std::ispunct(uc)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(uc)));
  }
  std::istringstream words(cleaned);
  std::string word;
  std::string out;
  while (words >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

double exact_match(const Record& prediction, const Example& example, const std::string& field,
                   const std::string& gold_field) {
  const auto gold = example.metadata.find(gold_field);
  if (gold == example.metadata.end()) {
    throw MissingGold("example '" + example.id + "' has no gold '" + gold_field + "'");
  }
  const auto pred = prediction.find(field);
  if (pred == prediction.end()) return 0.0;
  return normalize_answer(pred->second) == normalize_answer(gold->second) ? 1.0 : 0.0;
}

Metric exact_match_metric(std::string field, std::string gold_field) {
  return {"exact_match", [field = std::move(field), gold_field = std::move(gold_field)](
                             const Record& p, const Example& e) { return exact_match(p, e, field, gold_field); },
          true};
}

Metric conditional_format_metric(std::string field) {
  return {"conditional_format", [field = std::move(field)](const Record& p, const Example& e) -> double {
            const auto pred_it = p.find(field);
            if (pred_it == p.end()) return 0.0;
            const std::string response = trim(pred_it->second);
            const auto type_it = e.metadata.find("answer_type");
            const std::string type = type_it == e.metadata.end() ? "other" : to_lower(type_it->second);
            static constexpr std::string_view kPeace = "Peace!";
            const bool peace = ends_with(response, kPeace);

            std::string answer = response;
            bool format_ok = true;
            if (type == "date") {
              format_ok = peace;
              if (peace) answer = trim(response.substr(0, response.size() - kPeace.size()));
            } else {
              if (peace) return 0.0;
              if (type == "person") {
                format_ok = std::none_of(response.begin(), response.end(),
                                         [](unsigned char c) { return std::isupper(c); });
              } else if (type == "place") {
                format_ok = std::none_of(response.begin(), response.end(),
                                         [](unsigned char c) { return c < 128 && std::ispunct(c); });
              } else {
                format_ok = std::none_of(response.begin(), response.end(),
                                         [](unsigned char c) { return std::islower(c); });
              }
            }
            if (!format_ok) return 0.0;
            Record normalized{{field, answer}};
            return exact_match(normalized, e, field, "answer");
          },
          true};
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalResult evaluate(const Program& program, const Assignment& assignment,
                    std::span<const Example> examples, const Metric& metric, LmBackend& lm,
                    std::size_t parallelism, std::uint64_t seed) {
  if (examples.empty()) throw EmptyBatch("evaluate: empty example list");

  EvalResult result;
  result.per_example.assign(examples.size(), 0.0);
  std::vector<char> parse_failed(examples.size(), 0);
  std::vector<char> lm_failed(examples.size(), 0);

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= examples.size()) return;
      const auto& ex = examples[i];
      try {
        const auto run = run_program(program, assignment, ex.inputs, lm, stable_hash(ex.id, seed));
        if (run.prediction.failed) parse_failed[i] = 1;
        result.per_example[i] = metric(run.prediction, ex);
      } catch (const LmError&) {
        lm_failed[i] = 1;
        result.per_example[i] = 0.0;
      } catch (...) {
        std::lock_guard lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
        abort = true;
        return;
      }
    }
  };

  const std::size_t threads = std::clamp<std::size_t>(parallelism, 1, examples.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (fatal) std::rethrow_exception(fatal);

  double sum = 0.0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    sum += result.per_example[i];
    result.diagnostics.parse_failures += parse_failed[i];
    result.diagnostics.lm_failures += lm_failed[i];
  }
  result.score = sum / static_cast<double>(examples.size());
  return result;
}

std::vector<std::size_t> sample_minibatch_indices(const Dataset& dataset, const std::string& split,
                                                  std::size_t batch_size, Rng& rng) {
  const auto it = dataset.splits.find(split);
  if (it == dataset.splits.end()) throw DatasetError("unknown split '" + split + "'");
  std::vector<std::size_t> pool = it->second;
  if (batch_size == 0) throw EmptyBatch("minibatch size must be positive");
  if (batch_size > pool.size()) {
    throw BatchTooLarge("batch of " + std::to_string(batch_size) + " from split of " +
                        std::to_string(pool.size()));
  }
  // Partial Fisher-Yates: the first batch_size slots become the sample.
  for (std::size_t i = 0; i < batch_size; ++i) {
    std::swap(pool[i], pool[i + rng.uniform_index(pool.size() - i)]);
  }
  pool.resize(batch_size);
  return pool;
}

std::vector<Example> sample_minibatch(const Dataset& dataset, const std::string& split,
                                      std::size_t batch_size, Rng& rng) {
  std::vector<Example> out;
  for (auto i : sample_minibatch_indices(dataset, split, batch_size, rng)) out.push_back(dataset.examples[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank
// ---------------------------------------------------------------------------

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                    WilcoxonMethod method) {
  if (a.size() != b.size()) throw std::invalid_argument("wilcoxon: paired samples differ in length");

  std::vector<double> diffs;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diffs.push_back(d);
  }
  const std::size_t n = diffs.size();
  if (n < 5) throw TooFewPairs("wilcoxon: " + std::to_string(n) + " nonzero differences, need 5");

  // Average ranks of |d|, kept doubled so they stay integral.
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return std::abs(diffs[x]) < std::abs(diffs[y]); });
  std::vector<long> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(diffs[order[j + 1]]) == std::abs(diffs[order[i]])) ++j;
    const long doubled = static_cast<long>(i + 1 + j + 1);  // 2 * mean of ranks i+1..j+1
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = doubled;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }

  long w_plus2 = 0;
  long total2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (diffs[i] > 0) w_plus2 += rank2[i];
  }
  const long w_min2 = std::min(w_plus2, total2 - w_plus2);

  WilcoxonResult r;
  r.n = n;
  r.statistic = static_cast<double>(w_min2) / 2.0;
  r.exact = method == WilcoxonMethod::Exact || (method == WilcoxonMethod::Auto && n <= 25);

  if (r.exact) {
    // Null distribution of the doubled W+ over all 2^n sign patterns.
    std::vector<double> dist(static_cast<std::size_t>(total2) + 1, 0.0);
    dist[0] = 1.0;
    long reach = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (long s = reach; s >= 0; --s) {
        if (dist[static_cast<std::size_t>(s)] != 0.0) {
          dist[static_cast<std::size_t>(s + rank2[i])] += dist[static_cast<std::size_t>(s)];
        }
      }
      reach += rank2[i];
    }
    double tail = 0.0;
    for (long s = 0; s <= w_min2; ++s) tail += dist[static_cast<std::size_t>(s)];
    r.p_two_sided = std::min(1.0, 2.0 * tail / std::ldexp(1.0, static_cast<int>(n)));
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1.0) / 4.0;
    const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
    const double w_plus = static_cast<double>(w_plus2) / 2.0;
    const double z = std::max(0.0, std::abs(w_plus - mean) - 0.5) / std::sqrt(var);
    r.p_two_sided = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Trial log
// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const TrialRecord& r) {
  j = nlohmann::json::object();
  j["trial_index"] = r.trial_index;
  j["kind"] = r.kind == TrialRecord::Kind::Full ? "full" : "minibatch";
  j["score"] = r.score;
  j["param_vector"] = r.param_vector;
  j["batch_example_ids"] = r.batch_example_ids;
  if (r.proposer_hparams) j["proposer_hparams"] = *r.proposer_hparams;
  if (r.degraded) j["degraded"] = true;
}

void from_json(const nlohmann::json& j, TrialRecord& r) {
  j.at("trial_index").get_to(r.trial_index);
  r.kind = j.at("kind").get<std::string>() == "full" ? TrialRecord::Kind::Full : TrialRecord::Kind::Minibatch;
  j.at("score").get_to(r.score);
  j.at("param_vector").get_to(r.param_vector);
  r.batch_example_ids = j.value("batch_example_ids", std::vector<std::string>{});
  if (j.contains("proposer_hparams")) r.proposer_hparams = j.at("proposer_hparams").get<ParamVector>();
  r.degraded = j.value("degraded", false);
}

void write_trial_log(const std::filesystem::path& path, std::span<const TrialRecord> trials) {
  std::ofstream out(path);
  for (const auto& t : trials) out << nlohmann::json(t).dump() << '\n';
}

std::vector<TrialRecord> read_trial_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingLog("no trial log at '" + path.string() + "'");
  std::vector<TrialRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    out.push_back(nlohmann::json::parse(line).get<TrialRecord>());
  }
  return out;
}

}  // namespace promptforge
