#pragma once

// Threshold selection rephrased as selective sequential hypothesis testing.
// Kept apart from the estimator so it can serve as an independent check of
// ko_threshold / ko_plus_threshold.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "ggmko/estimator.hpp"

namespace ggmko {

inline SelectionResult sequential_threshold_oracle(const TestMatrix& w, double q, Scheme scheme) {
  if (!(q >= 0.0 && q <= 1.0)) throw error(errc::invalid_q, "q must lie in [0, 1]");

  struct Entry {
    double w;
    Edge edge;
  };
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < w.dim(); ++i)
    for (std::size_t j = i + 1; j < w.dim(); ++j)
      if (w(i, j) != 0.0) entries.push_back({w(i, j), Edge(i, j)});
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    return std::abs(a.w) > std::abs(b.w);
  });

  // p-values: 1/2 for a positive statistic, 1 for a negative one.
  std::vector<double> pvalue(entries.size());
  for (std::size_t l = 0; l < entries.size(); ++l) pvalue[l] = entries[l].w > 0.0 ? 0.5 : 1.0;

  const double offset = scheme == Scheme::ko_plus ? 1.0 : 0.0;
  std::size_t k_hat = 0;  // 1-based; 0 means the maximum is over an empty set
  double rejected = 0.0;
  double accepted = 0.0;
  for (std::size_t k = 1; k <= entries.size(); ++k) {
    if (pvalue[k - 1] > 0.5) accepted += 1.0;
    else rejected += 1.0;
    const bool last_of_tie =
        k == entries.size() || std::abs(entries[k - 1].w) > std::abs(entries[k].w);
    if (!last_of_tie) continue;
    if ((accepted + offset) / std::max(rejected, 1.0) <= q) k_hat = k;
  }

  SelectionResult out;
  out.q = q;
  out.scheme = scheme;
  if (k_hat == 0) return out;
  out.threshold = std::abs(entries[k_hat - 1].w);
  for (std::size_t l = 0; l < k_hat; ++l)
    if (pvalue[l] <= 0.5) {
      out.selected.insert(entries[l].edge);
      if (w.signal) out.retained.emplace(entries[l].edge, (*w.signal)(entries[l].edge.i, entries[l].edge.j));
    }
  return out;
}

}  // namespace ggmko
