#include "promptforge/bootstrap.hpp"

#include <algorithm>
#include <fstream>

namespace promptforge {

void DemoStore::append(Demonstration demo) { per_module_[demo.module_index].push_back(std::move(demo)); }

const std::vector<Demonstration>& DemoStore::for_module(std::size_t module_index) const {
  static const std::vector<Demonstration> kEmpty;
  const auto it = per_module_.find(module_index);
  return it == per_module_.end() ? kEmpty : it->second;
}

std::size_t DemoStore::total() const {
  std::size_t n = 0;
  for (const auto& [_, demos] : per_module_) n += demos.size();
  return n;
}

void DemoStore::canonicalize() {
  for (auto& [_, demos] : per_module_) {
    std::stable_sort(demos.begin(), demos.end(), [](const Demonstration& a, const Demonstration& b) {
      return std::tie(a.source_example_id, a.invocation) < std::tie(b.source_example_id, b.invocation);
    });
  }
}

void DemoStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  for (const auto& [_, demos] : per_module_) {
    for (const auto& d : demos) out << nlohmann::json(d).dump() << '\n';
  }
}

DemoStore DemoStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DatasetError("cannot open demo store '" + path.string() + "'");
  DemoStore store;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    store.append(nlohmann::json::parse(line).get<Demonstration>());
  }
  return store;
}

double default_accept_threshold(const Metric& metric) { return metric.binary ? 1.0 : 0.5; }

DemoStore bootstrap_demos(const Program& program, const Dataset& dataset, const Metric& metric,
                          const BootstrapConfig& config, LmBackend& teacher) {
  DemoStore store;
  const std::size_t wanted = config.max_demos * config.num_candidate_sets;
  if (wanted == 0) return store;

  const auto split_it = dataset.splits.find(config.split);
  if (split_it == dataset.splits.end() || split_it->second.empty()) {
    throw DatasetError("bootstrap: split '" + config.split + "' is empty");
  }
  std::vector<std::size_t> order = split_it->second;
  Rng rng(config.rng_seed);
  rng.shuffle(order);

  const Assignment teacher_assignment = config.teacher_assignment.value_or(program.seed_assignment());
  auto satisfied = [&] {
    for (std::size_t m = 0; m < program.modules.size(); ++m) {
      if (store.for_module(m).size() < wanted) return false;
    }
    return true;
  };

  std::size_t accepted_runs = 0;
  const std::size_t limit = std::min(order.size(), config.max_source_examples);
  for (std::size_t i = 0; i < limit && !satisfied(); ++i) {
    const auto& ex = dataset.examples[order[i]];
    ProgramRun run;
    try {
      run = run_program(program, teacher_assignment, ex.inputs, teacher, stable_hash(ex.id, config.rng_seed));
    } catch (const LmError&) {
      continue;
    }
    const double score = metric(run.prediction, ex);
    if (score < config.accept_threshold || run.prediction.failed) continue;
    ++accepted_runs;
    for (const auto& call : run.trace.calls) {
      if (call.parse_failed) continue;
      store.append({call.module_index, call.inputs, call.parsed_outputs, ex.id, call.invocation_ordinal, score});
    }
  }
  if (accepted_runs == 0) {
    throw NoDemosFound("bootstrap: no teacher run scored >= " + std::to_string(config.accept_threshold));
  }
  store.canonicalize();
  return store;
}

std::vector<DemoSet> sample_demo_sets(const DemoStore& store, std::size_t module_count,
                                      std::size_t max_demos, std::size_t num_sets, Rng& rng) {
  std::vector<DemoSet> sets;
  sets.reserve(num_sets);
  for (std::size_t s = 0; s < num_sets; ++s) {
    DemoSet set(module_count);
    if (s > 0 && max_demos > 0) {
      for (std::size_t m = 0; m < module_count; ++m) {
        const auto& pool = store.for_module(m);
        std::vector<std::size_t> idx(pool.size());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        const std::size_t take = std::min(max_demos, pool.size());
        for (std::size_t i = 0; i < take; ++i) {
          std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
          set[m].push_back(pool[idx[i]]);
        }
      }
    }
    sets.push_back(std::move(set));
  }
  return sets;
}

void bind_demos(Assignment& assignment, const Program& program, std::size_t module_index,
                std::span<const Demonstration> demos) {
  const auto& module = program.modules.at(module_index);
  for (std::size_t k = 0; k < module.max_demos; ++k) {
    const auto v = VariableId::demo(module_index, k);
    if (k < demos.size()) {
      assignment.bind(v, format_demo(module, demos[k]));
    } else {
      assignment.unbind(v);
    }
  }
}

}  // namespace promptforge
