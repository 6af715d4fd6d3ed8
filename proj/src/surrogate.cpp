#include "promptforge/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace promptforge {

void SearchSpace::validate() const {
  std::set<std::string> names;
  for (const auto& p : params) {
    if (p.cardinality < 1) throw std::invalid_argument("parameter '" + p.name + "' has cardinality 0");
    if (!names.insert(p.name).second) throw std::invalid_argument("duplicate parameter '" + p.name + "'");
  }
}

bool SearchSpace::contains(const ParamVector& v) const {
  if (v.size() != params.size()) return false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] >= params[i].cardinality) return false;
  }
  return true;
}

std::size_t SearchSpace::total_vectors() const {
  std::size_t total = 1;
  for (const auto& p : params) {
    if (total > std::numeric_limits<std::size_t>::max() / p.cardinality) {
      return std::numeric_limits<std::size_t>::max();
    }
    total *= p.cardinality;
  }
  return total;
}

std::vector<ParamVector> SearchSpace::enumerate() const {
  std::vector<ParamVector> out;
  ParamVector v(params.size(), 0);
  const std::size_t total = total_vectors();
  out.reserve(total);
  for (std::size_t n = 0; n < total; ++n) {
    out.push_back(v);
    for (std::size_t i = params.size(); i-- > 0;) {
      if (++v[i] < params[i].cardinality) break;
      v[i] = 0;
    }
  }
  return out;
}

TpeState tpe_init(SearchSpace space, std::uint64_t seed, TpeSettings settings) {
  space.validate();
  if (!(settings.gamma > 0.0 && settings.gamma < 1.0)) throw std::invalid_argument("gamma must be in (0, 1)");
  if (!(settings.prior_weight > 0.0)) throw std::invalid_argument("prior_weight must be > 0");
  if (settings.n_ei_candidates < 1) throw std::invalid_argument("n_ei_candidates must be >= 1");
  return TpeState{std::move(space), {}, settings, seed};
}

void tpe_observe(TpeState& state, ParamVector v, double score) {
  if (!state.space.contains(v)) throw OutOfSpace("vector outside the search space");
  if (!(score >= 0.0 && score <= 1.0)) throw OutOfSpace("score outside [0, 1]");
  state.observations.push_back({std::move(v), score});
}

ObservationSplit split_observations(const TpeState& state) {
  const auto& obs = state.observations;
  if (obs.empty()) throw NoObservations("split_observations: no observations");
  std::vector<std::size_t> order(obs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return obs[a].score > obs[b].score; });
  const auto n_good = static_cast<std::size_t>(
      std::ceil(state.settings.gamma * static_cast<double>(obs.size()) - 1e-12));
  const std::size_t cut = std::clamp<std::size_t>(n_good, 1, obs.size());

  // Members keep trial order within each side.
  std::vector<char> is_good(obs.size(), 0);
  for (std::size_t i = 0; i < cut; ++i) is_good[order[i]] = 1;
  ObservationSplit split;
  for (std::size_t i = 0; i < obs.size(); ++i) (is_good[i] ? split.good : split.bad).push_back(obs[i]);
  return split;
}

std::vector<double> categorical_density(std::span<const Observation> members, std::size_t param_index,
                                        const TpeState& state) {
  const std::size_t card = state.space.params.at(param_index).cardinality;
  const double prior = state.settings.prior_weight / static_cast<double>(card);
  std::vector<double> probs(card, prior);
  for (const auto& m : members) probs[m.vector.at(param_index)] += 1.0;
  const double total = static_cast<double>(members.size()) + state.settings.prior_weight;
  for (auto& p : probs) p /= total;
  return probs;
}

ParamVector tpe_suggest(const TpeState& state, Rng& rng) {
  const auto& params = state.space.params;
  ParamVector out(params.size(), 0);

  if (state.observations.size() < state.settings.n_startup || state.observations.empty()) {
    for (std::size_t p = 0; p < params.size(); ++p) out[p] = rng.uniform_index(params[p].cardinality);
    return out;
  }

  const auto split = split_observations(state);
  std::vector<std::vector<double>> log_ratio(params.size());
  std::vector<std::vector<double>> good_density(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    good_density[p] = categorical_density(split.good, p, state);
    const auto g = categorical_density(split.bad, p, state);
    log_ratio[p].resize(params[p].cardinality);
    for (std::size_t c = 0; c < params[p].cardinality; ++c) {
      log_ratio[p][c] = std::log(good_density[p][c]) - std::log(g[c]);
    }
  }

  double best_score = -std::numeric_limits<double>::infinity();
  ParamVector candidate(params.size(), 0);
  for (std::size_t k = 0; k < state.settings.n_ei_candidates; ++k) {
    double score = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
      candidate[p] = params[p].cardinality == 1 ? 0 : rng.categorical(good_density[p]);
      score += log_ratio[p][candidate[p]];
    }
    if (score > best_score) {
      best_score = score;
      out = candidate;
    }
  }
  return out;
}

ParamVector best_mean_vector(std::span<const TrialRecord> trials, std::size_t min_count) {
  struct Tally {
    double sum = 0.0;
    std::size_t count = 0;
    std::size_t first_seen = 0;
  };
  std::map<ParamVector, Tally> tallies;
  std::size_t seen = 0;
  for (const auto& t : trials) {
    if (t.kind != TrialRecord::Kind::Minibatch || t.degraded) continue;
    auto [it, inserted] = tallies.try_emplace(t.param_vector);
    if (inserted) it->second.first_seen = seen++;
    it->second.sum += t.score;
    ++it->second.count;
  }
  const ParamVector* best = nullptr;
  double best_mean = -1.0;
  std::size_t best_seen = 0;
  for (const auto& [v, tally] : tallies) {
    if (tally.count < std::max<std::size_t>(min_count, 1)) continue;
    const double mean = tally.sum / static_cast<double>(tally.count);
    if (!best || mean > best_mean || (mean == best_mean && tally.first_seen < best_seen)) {
      best = &v;
      best_mean = mean;
      best_seen = tally.first_seen;
    }
  }
  if (!best) throw NoEligibleVector("no vector has " + std::to_string(min_count) + " minibatch trials");
  return *best;
}

std::map<std::string, double> param_importance(const SearchSpace& space,
                                               std::span<const Observation> observations) {
  std::map<std::string, double> out;
  for (const auto& p : space.params) out[p.name] = 0.0;
  if (observations.size() < 2) return out;

  double mean = 0.0;
  for (const auto& o : observations) mean += o.score;
  mean /= static_cast<double>(observations.size());
  double ss_total = 0.0;
  for (const auto& o : observations) ss_total += (o.score - mean) * (o.score - mean);
  if (ss_total <= 1e-15) return out;

  double total_eta = 0.0;
  for (std::size_t p = 0; p < space.params.size(); ++p) {
    std::map<std::size_t, std::pair<double, std::size_t>> groups;
    for (const auto& o : observations) {
      auto& g = groups[o.vector.at(p)];
      g.first += o.score;
      ++g.second;
    }
    if (groups.size() < 2) continue;
    double ss_between = 0.0;
    for (const auto& [_, g] : groups) {
      const double gm = g.first / static_cast<double>(g.second);
      ss_between += static_cast<double>(g.second) * (gm - mean) * (gm - mean);
    }
    const double eta = std::clamp(ss_between / ss_total, 0.0, 1.0);
    out[space.params[p].name] = eta;
    total_eta += eta;
  }
  if (total_eta > 0.0) {
    for (auto& [_, v] : out) v /= total_eta;
  }
  return out;
}

std::map<std::string, double> param_importance(const SearchSpace& space,
                                               std::span<const TrialRecord> trials) {
  std::vector<Observation> obs;
  for (const auto& t : trials) {
    if (t.kind != TrialRecord::Kind::Minibatch) continue;
    const auto& v = t.proposer_hparams ? *t.proposer_hparams : t.param_vector;
    if (space.contains(v)) obs.push_back({v, t.score});
  }
  return param_importance(space, obs);
}

namespace {

const char* kind_name(ParamSpec::Kind k) {
  switch (k) {
    case ParamSpec::Kind::InstructionChoice: return "instruction";
    case ParamSpec::Kind::DemoSetChoice: return "demo_set";
    case ParamSpec::Kind::ProposerHparam: return "proposer";
  }
  return "proposer";
}

ParamSpec::Kind kind_from(const std::string& s) {
  if (s == "instruction") return ParamSpec::Kind::InstructionChoice;
  if (s == "demo_set") return ParamSpec::Kind::DemoSetChoice;
  return ParamSpec::Kind::ProposerHparam;
}

}  // namespace

void to_json(nlohmann::json& j, const SearchSpace& s) {
  j = nlohmann::json::array();
  for (const auto& p : s.params) {
    j.push_back({{"name", p.name}, {"cardinality", p.cardinality}, {"kind", kind_name(p.kind)},
                 {"module_index", p.module_index}});
  }
}

void from_json(const nlohmann::json& j, SearchSpace& s) {
  s.params.clear();
  for (const auto& p : j) {
    s.params.push_back({p.at("name").get<std::string>(), p.at("cardinality").get<std::size_t>(),
                        kind_from(p.at("kind").get<std::string>()), p.value("module_index", std::size_t{0})});
  }
}

void to_json(nlohmann::json& j, const TpeState& s) {
  auto obs = nlohmann::json::array();
  for (const auto& o : s.observations) obs.push_back({{"vector", o.vector}, {"score", o.score}});
  j = {{"space", s.space},
       {"observations", obs},
       {"hyperparams",
        {{"gamma", s.settings.gamma},
         {"n_startup", s.settings.n_startup},
         {"n_ei_candidates", s.settings.n_ei_candidates},
         {"prior_weight", s.settings.prior_weight}}},
       {"seed", s.rng_seed}};
}

void from_json(const nlohmann::json& j, TpeState& s) {
  j.at("space").get_to(s.space);
  s.observations.clear();
  for (const auto& o : j.at("observations")) {
    s.observations.push_back({o.at("vector").get<ParamVector>(), o.at("score").get<double>()});
  }
  const auto& h = j.at("hyperparams");
  s.settings.gamma = h.at("gamma").get<double>();
  s.settings.n_startup = h.at("n_startup").get<std::size_t>();
  s.settings.n_ei_candidates = h.at("n_ei_candidates").get<std::size_t>();
  s.settings.prior_weight = h.at("prior_weight").get<double>();
  s.rng_seed = j.at("seed").get<std::uint64_t>();
}

}  // namespace promptforge
