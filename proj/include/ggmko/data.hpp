#pragma once

#include <cmath>
#include <compare>
#include <cstddef>
#include <set>
#include <string>
#include <vector>

#include "ggmko/error.hpp"
#include "ggmko/numeric.hpp"

namespace ggmko {

/// n x p sample matrix; rows are observations.
struct DataMatrix {
  Matrix values;
  std::vector<std::string> column_names;  // empty or size p

  DataMatrix() = default;
  explicit DataMatrix(Matrix m, std::vector<std::string> names = {})
      : values(std::move(m)), column_names(std::move(names)) {}

  std::size_t n() const noexcept { return values.rows(); }
  std::size_t p() const noexcept { return values.cols(); }

  std::string name(std::size_t j) const {
    return j < column_names.size() ? column_names[j] : "V" + std::to_string(j + 1);
  }

  void require_finite() const {
    for (double v : values.values())
      if (!std::isfinite(v)) throw error(errc::invalid_argument, "data contains non-finite values");
  }
};

inline DataMatrix center_columns(const DataMatrix& x) {
  DataMatrix out = x;
  if (x.n() == 0) return out;
  for (std::size_t j = 0; j < x.p(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < x.n(); ++i) mean += x.values(i, j);
    mean /= static_cast<double>(x.n());
    for (std::size_t i = 0; i < x.n(); ++i) out.values(i, j) -= mean;
  }
  return out;
}

/// Unordered node pair, always stored with i < j.
struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;

  Edge() = default;
  Edge(std::size_t a, std::size_t b) : i(a < b ? a : b), j(a < b ? b : a) {}

  auto operator<=>(const Edge&) const = default;
};

using EdgeSet = std::set<Edge>;

inline std::size_t pair_count(std::size_t p) { return p * (p - 1) / 2; }

/// All unordered pairs of a p-node graph.
inline EdgeSet complete_graph(std::size_t p) {
  EdgeSet out;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) out.emplace(i, j);
  return out;
}

inline bool is_subset(const EdgeSet& a, const EdgeSet& b) {
  for (const auto& e : a)
    if (!b.contains(e)) return false;
  return true;
}

}  // namespace ggmko
