#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace promptforge {

/// Named string fields. Ordered so that iteration (and therefore rendering and
/// serialization) is deterministic.
using Record = std::map<std::string, std::string>;

/// One choice index per search-space parameter.
using ParamVector = std::vector<std::size_t>;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define PROMPTFORGE_ERROR(Name)          \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  };

PROMPTFORGE_ERROR(MissingInputField)
PROMPTFORGE_ERROR(UnboundInstruction)
PROMPTFORGE_ERROR(ParseError)
PROMPTFORGE_ERROR(InvalidProgram)
PROMPTFORGE_ERROR(EmptyBatch)
PROMPTFORGE_ERROR(BatchTooLarge)
PROMPTFORGE_ERROR(MissingGold)
PROMPTFORGE_ERROR(TooFewPairs)
PROMPTFORGE_ERROR(NoDemosFound)
PROMPTFORGE_ERROR(NoObservations)
PROMPTFORGE_ERROR(OutOfSpace)
PROMPTFORGE_ERROR(NoEligibleVector)
PROMPTFORGE_ERROR(NonUniqueArgmax)
PROMPTFORGE_ERROR(ConfigError)
PROMPTFORGE_ERROR(MissingLog)
PROMPTFORGE_ERROR(DatasetError)

#undef PROMPTFORGE_ERROR

/// Raised by a call-budget guard before an LM call that would exceed the
/// ceiling. Deliberately not an LmError: evaluation must not swallow it.
class BudgetExhausted : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Deterministic randomness
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// 64-bit FNV-1a followed by a splitmix finalizer.
inline std::uint64_t stable_hash(std::string_view s, std::uint64_t seed = 0) {
  std::uint64_t h = 0xcbf29ce484222325ULL ^ splitmix64(seed);
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

/// Seeded generator whose output is identical across standard libraries
/// (std::uniform_*_distribution is implementation-defined, so it is not used).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::size_t uniform_index(std::size_t n) {
    if (n <= 1) return 0;
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Index drawn from unnormalized nonnegative weights.
  std::size_t categorical(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform01() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// String helpers
// ---------------------------------------------------------------------------

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool starts_with_ci(std::string_view s, std::string_view prefix);
std::vector<std::string> split_lines(std::string_view s);

/// "search_query" -> "Search Query".
std::string field_label(std::string_view field_name);

}  // namespace promptforge
