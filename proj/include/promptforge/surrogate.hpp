#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptforge/common.hpp"
#include "promptforge/evaluation.hpp"

namespace promptforge {

struct ParamSpec {
  enum class Kind { InstructionChoice, DemoSetChoice, ProposerHparam };

  std::string name;
  std::size_t cardinality = 1;
  Kind kind = Kind::InstructionChoice;
  std::size_t module_index = 0;  // meaningful for the *Choice kinds
};

struct SearchSpace {
  std::vector<ParamSpec> params;

  void validate() const;
  std::size_t size() const { return params.size(); }
  bool contains(const ParamVector& v) const;
  /// Number of distinct vectors (saturates at SIZE_MAX).
  std::size_t total_vectors() const;
  /// Enumerates every vector in lexicographic order.
  std::vector<ParamVector> enumerate() const;
};

struct TpeSettings {
  double gamma = 0.25;
  std::size_t n_startup = 10;
  std::size_t n_ei_candidates = 24;
  double prior_weight = 1.0;
};

struct Observation {
  ParamVector vector;
  double score = 0.0;
};

/// Multivariate TPE over categorical parameters: one joint good/bad split and
/// product-of-categoricals densities.
struct TpeState {
  SearchSpace space;
  std::vector<Observation> observations;
  TpeSettings settings;
  std::uint64_t rng_seed = 0;
};

TpeState tpe_init(SearchSpace space, std::uint64_t seed, TpeSettings settings = {});

/// Appends an observation. Throws OutOfSpace for an invalid vector or a score
/// outside [0, 1].
void tpe_observe(TpeState& state, ParamVector v, double score);

struct ObservationSplit {
  std::vector<Observation> good;
  std::vector<Observation> bad;
};

/// good = top ceil(gamma * n) by score, earlier observations first on ties.
ObservationSplit split_observations(const TpeState& state);

/// p(c) proportional to count(c among members) + prior_weight / cardinality.
std::vector<double> categorical_density(std::span<const Observation> members, std::size_t param_index,
                                        const TpeState& state);

/// Uniform before n_startup observations; afterwards the best of
/// n_ei_candidates draws from l under sum_p log l_p - log g_p.
ParamVector tpe_suggest(const TpeState& state, Rng& rng);

/// The minibatch-evaluated vector with the highest mean score among those
/// with at least `min_count` minibatch trials. Ties go to the first seen.
ParamVector best_mean_vector(std::span<const TrialRecord> trials, std::size_t min_count = 1);

/// One-way ANOVA eta^2 per parameter, normalized to sum to 1 across the
/// parameters with nonzero eta^2. Parameters with fewer than two observed
/// values get 0.
std::map<std::string, double> param_importance(const SearchSpace& space,
                                               std::span<const Observation> observations);

/// Importance over the minibatch trials of a log. Uses proposer_hparams when
/// the record has them, param_vector otherwise.
std::map<std::string, double> param_importance(const SearchSpace& space,
                                               std::span<const TrialRecord> trials);

void to_json(nlohmann::json& j, const SearchSpace& s);
void from_json(const nlohmann::json& j, SearchSpace& s);
void to_json(nlohmann::json& j, const TpeState& s);
void from_json(const nlohmann::json& j, TpeState& s);

}  // namespace promptforge
