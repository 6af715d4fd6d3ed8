#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "promptforge/evaluation.hpp"
#include "promptforge/program.hpp"

namespace promptforge {

/// Global store of accepted demonstrations, per module.
class DemoStore {
 public:
  void append(Demonstration demo);
  const std::vector<Demonstration>& for_module(std::size_t module_index) const;
  std::size_t total() const;
  bool empty() const { return total() == 0; }
  const std::map<std::size_t, std::vector<Demonstration>>& per_module() const { return per_module_; }

  /// Sorts each module's demos by (source_example_id, invocation).
  void canonicalize();

  void save(const std::filesystem::path& path) const;
  static DemoStore load(const std::filesystem::path& path);

 private:
  std::map<std::size_t, std::vector<Demonstration>> per_module_;
};

struct BootstrapConfig {
  double accept_threshold = 1.0;       // theta_accept
  std::size_t max_demos = 4;           // K
  std::size_t num_candidate_sets = 10; // N_sets
  std::size_t max_source_examples = 100;
  std::optional<Assignment> teacher_assignment;  // defaults to the seed assignment
  std::uint64_t rng_seed = 0;
  std::string split = "train";
};

/// 1.0 for 0/1 metrics, 0.5 otherwise.
double default_accept_threshold(const Metric& metric);

/// Rejection-samples demonstrations from teacher runs over shuffled training
/// examples. Throws NoDemosFound when no run clears the threshold.
DemoStore bootstrap_demos(const Program& program, const Dataset& dataset, const Metric& metric,
                          const BootstrapConfig& config, LmBackend& teacher);

/// demo_sets[set][module] is the demo list that set gives the module.
using DemoSet = std::vector<std::vector<Demonstration>>;

/// `num_sets` candidate sets; set 0 is always empty. Each later set gives every
/// module min(K, available) demos drawn without replacement.
std::vector<DemoSet> sample_demo_sets(const DemoStore& store, std::size_t module_count,
                                      std::size_t max_demos, std::size_t num_sets, Rng& rng);

/// Binds module `module_index`'s demo slots to `demos` (slot k <- demos[k]),
/// clearing any remaining slots.
void bind_demos(Assignment& assignment, const Program& program, std::size_t module_index,
                std::span<const Demonstration> demos);

}  // namespace promptforge
