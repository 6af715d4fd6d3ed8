#pragma once

// Independent reference computations used to freeze expected values.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace pf_oracle {

/// Two-sided signed-rank p-value by enumerating all 2^n sign patterns:
/// P(min(W+, W-) <= observed) under the null. Zero differences dropped, tied
/// magnitudes get average ranks.
inline double wilcoxon_enumerated_p(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> d;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) d.push_back(a[i] - b[i]);
  }
  const std::size_t n = d.size();
  std::vector<double> ranks(n);
  for (std::size_t i = 0; i < n; ++i) {
    double less = 0, equal = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::abs(d[j]) < std::abs(d[i])) ++less;
      if (std::abs(d[j]) == std::abs(d[i])) ++equal;
    }
    ranks[i] = less + (equal + 1.0) / 2.0;
  }
  double total = 0, w_plus = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total += ranks[i];
    if (d[i] > 0) w_plus += ranks[i];
  }
  const double observed = std::min(w_plus, total - w_plus);
  std::uint64_t hits = 0;
  const std::uint64_t patterns = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < patterns; ++mask) {
    double w = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1) w += ranks[i];
    }
    if (std::min(w, total - w) <= observed + 1e-9) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(patterns);
}

/// All k-subsets of {0..n-1} in lexicographic order.
inline std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur;
  auto rec = [&](auto&& self, std::size_t start) -> void {
    if (cur.size() == k) {
      out.push_back(cur);
      return;
    }
    for (std::size_t i = start; i < n; ++i) {
      cur.push_back(i);
      self(self, i + 1);
      cur.pop_back();
    }
  };
  rec(rec, 0);
  return out;
}

/// One-way ANOVA eta^2 = SS_between / SS_total computed from group sums.
inline double eta_squared(const std::vector<std::size_t>& groups, const std::vector<double>& y) {
  const double n = static_cast<double>(y.size());
  double grand = 0;
  for (double v : y) grand += v;
  grand /= n;
  double ss_total = 0;
  for (double v : y) ss_total += (v - grand) * (v - grand);
  std::size_t g_max = *std::max_element(groups.begin(), groups.end());
  double ss_between = 0;
  for (std::size_t g = 0; g <= g_max; ++g) {
    double sum = 0, count = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (groups[i] == g) {
        sum += y[i];
        ++count;
      }
    }
    if (count > 0) ss_between += count * (sum / count - grand) * (sum / count - grand);
  }
  return ss_between / ss_total;
}

}  // namespace pf_oracle
