#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "ggmko/data.hpp"
#include "ggmko/error.hpp"
#include "ggmko/numeric.hpp"

namespace ggmko {

/// Sample correlations C_ij = sum x_i x_j / sqrt(sum x_i^2 sum x_j^2).
/// Uncentered unless `center` is set.
inline SymmetricMatrix sample_correlations(const DataMatrix& x, bool center = false) {
  const SymmetricMatrix gram = cross_product(center ? center_columns(x).values : x.values);
  const std::size_t p = gram.dim();
  for (std::size_t i = 0; i < p; ++i)
    if (!(gram(i, i) > 0.0))
      throw error(errc::degenerate_column, "column " + std::to_string(i) + " has zero norm");
  SymmetricMatrix c(p, 1.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j)
      c.set(i, j, std::clamp(gram(i, j) / std::sqrt(gram(i, i) * gram(j, j)), -1.0, 1.0));
  return c;
}

/// Edge sets along a descending grid of tuning values.
struct PathResult {
  std::vector<double> grid;
  std::vector<EdgeSet> edges;
};

inline void require_descending_grid(std::span<const double> grid) {
  if (grid.empty()) throw error(errc::empty_grid, "tuning grid is empty");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    if (!(grid[k] > 0.0)) throw error(errc::invalid_argument, "tuning grid must be positive");
    if (k > 0 && !(grid[k] < grid[k - 1]))
      throw error(errc::invalid_argument, "tuning grid must be strictly descending");
  }
}

/// Edge (i, j) is present at level t iff |m_ij| >= t.
inline PathResult threshold_graph(const SymmetricMatrix& m, std::span<const double> grid) {
  require_descending_grid(grid);
  PathResult out;
  out.grid.assign(grid.begin(), grid.end());
  for (double t : grid) {
    EdgeSet level;
    for (std::size_t i = 0; i < m.dim(); ++i)
      for (std::size_t j = i + 1; j < m.dim(); ++j)
        if (std::abs(m(i, j)) >= t) level.emplace(i, j);
    out.edges.push_back(std::move(level));
  }
  return out;
}

/// `count` evenly spaced values max, ..., max / count.
inline std::vector<double> linear_grid(double max, std::size_t count = 50) {
  std::vector<double> g;
  for (std::size_t k = count; k >= 1; --k)
    g.push_back(max * static_cast<double>(k) / static_cast<double>(count));
  return g;
}

/// `count` log-spaced values from max down to max / ratio.
inline std::vector<double> log_grid(double max, double ratio = 100.0, std::size_t count = 50) {
  std::vector<double> g;
  for (std::size_t k = 0; k < count; ++k) {
    const double f = count == 1 ? 0.0 : static_cast<double>(k) / static_cast<double>(count - 1);
    g.push_back(max * std::pow(ratio, -f));
  }
  return g;
}

inline double soft_threshold(double z, double lambda) {
  if (z > lambda) return z - lambda;
  if (z < -lambda) return z + lambda;
  return 0.0;
}

struct LassoFit {
  std::size_t response = 0;
  std::vector<double> coefficients;  // length p, on the standardized scale; entry `response` is 0
  double lambda = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Node-wise lasso problems of one data set. Columns are rescaled to unit mean
/// square (x_k^T x_k = n) and everything runs on the Gram matrix G = X^T X / n,
/// so the objective (1/2n)||x_j - X_{-j} b||^2 + lambda ||b||_1 has
/// lambda_max = max_k |G_kj|.
class NodewiseLasso {
 public:
  explicit NodewiseLasso(const DataMatrix& x) : gram_(x.p()) {
    const SymmetricMatrix raw = cross_product(x.values);
    const std::size_t p = x.p();
    std::vector<double> scale(p);
    for (std::size_t k = 0; k < p; ++k) {
      if (!(raw(k, k) > 0.0))
        throw error(errc::degenerate_column, "column " + std::to_string(k) + " has zero norm");
      scale[k] = 1.0 / std::sqrt(raw(k, k));
    }
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i; j < p; ++j) gram_.set(i, j, i == j ? 1.0 : raw(i, j) * scale[i] * scale[j]);
  }

  std::size_t p() const noexcept { return gram_.dim(); }
  const SymmetricMatrix& gram() const noexcept { return gram_; }

  double lambda_max(std::size_t j) const {
    double m = 0.0;
    for (std::size_t k = 0; k < p(); ++k)
      if (k != j) m = std::max(m, std::abs(gram_(k, j)));
    return m;
  }

  /// (1/n) x_k^T (x_j - X b) for every k.
  std::vector<double> gradient(std::size_t j, std::span<const double> beta) const {
    std::vector<double> g(p());
    for (std::size_t k = 0; k < p(); ++k) {
      double s = gram_(k, j);
      for (std::size_t l = 0; l < p(); ++l) s -= gram_(k, l) * beta[l];
      g[k] = s;
    }
    return g;
  }

  double objective(std::size_t j, std::span<const double> beta, double lambda) const {
    double quad = gram_(j, j);
    double l1 = 0.0;
    for (std::size_t k = 0; k < p(); ++k) {
      if (beta[k] == 0.0) continue;
      l1 += std::abs(beta[k]);
      quad -= 2.0 * beta[k] * gram_(k, j);
      for (std::size_t l = 0; l < p(); ++l) quad += beta[k] * gram_(k, l) * beta[l];
    }
    return 0.5 * quad + lambda * l1;
  }

  /// Cyclic coordinate descent, optionally warm-started.
  LassoFit fit(std::size_t j, double lambda, std::span<const double> warm = {}) const {
    if (!(lambda >= 0.0)) throw error(errc::invalid_argument, "lambda must be nonnegative");
    if (j >= p()) throw error(errc::invalid_argument, "response index out of range");
    const std::size_t dim = p();
    LassoFit fit;
    fit.response = j;
    fit.lambda = lambda;
    fit.coefficients.assign(dim, 0.0);
    if (warm.size() == dim) std::copy(warm.begin(), warm.end(), fit.coefficients.begin());
    fit.coefficients[j] = 0.0;
    auto& beta = fit.coefficients;
    std::vector<double> residual = gradient(j, beta);

    for (int sweep = 1; sweep <= tolerances::lasso_max_sweeps; ++sweep) {
      double max_change = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        if (k == j) continue;
        const double old = beta[k];
        const double updated = soft_threshold(residual[k] + old, lambda);
        const double delta = updated - old;
        if (delta == 0.0) continue;
        beta[k] = updated;
        for (std::size_t m = 0; m < dim; ++m) residual[m] -= gram_(m, k) * delta;
        max_change = std::max(max_change, std::abs(delta));
      }
      fit.iterations = sweep;
      if (max_change <= tolerances::lasso_coef_change) {
        fit.converged = true;
        break;
      }
    }
    return fit;
  }

 private:
  SymmetricMatrix gram_;
};

inline LassoFit lasso_coordinate_descent(const DataMatrix& x, std::size_t response, double lambda) {
  return NodewiseLasso(x).fit(response, lambda);
}

enum class MbRule { and_rule, or_rule };

constexpr std::string_view to_string(MbRule r) noexcept {
  return r == MbRule::and_rule ? "and" : "or";
}

inline EdgeSet combine_neighborhoods(const std::vector<LassoFit>& fits, MbRule rule) {
  const std::size_t p = fits.size();
  EdgeSet out;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) {
      const bool ij = fits[j].coefficients[i] != 0.0;
      const bool ji = fits[i].coefficients[j] != 0.0;
      if (rule == MbRule::and_rule ? (ij && ji) : (ij || ji)) out.emplace(i, j);
    }
  return out;
}

/// Neighborhood selection: one lasso per node, combined by the and/or rule.
inline EdgeSet mb_graph(const DataMatrix& x, double lambda, MbRule rule) {
  const NodewiseLasso lasso(x);
  std::vector<LassoFit> fits;
  for (std::size_t j = 0; j < x.p(); ++j) fits.push_back(lasso.fit(j, lambda));
  return combine_neighborhoods(fits, rule);
}

struct MbPaths {
  PathResult and_rule;
  PathResult or_rule;
};

/// Both neighborhood-selection paths along a descending lambda grid, warm-started.
inline MbPaths mb_paths(const DataMatrix& x, std::span<const double> lambdas) {
  require_descending_grid(lambdas);
  const NodewiseLasso lasso(x);
  const std::size_t p = x.p();
  std::vector<LassoFit> fits(p);
  MbPaths out;
  out.and_rule.grid.assign(lambdas.begin(), lambdas.end());
  out.or_rule.grid = out.and_rule.grid;
  for (double lambda : lambdas) {
    for (std::size_t j = 0; j < p; ++j) fits[j] = lasso.fit(j, lambda, fits[j].coefficients);
    out.and_rule.edges.push_back(combine_neighborhoods(fits, MbRule::and_rule));
    out.or_rule.edges.push_back(combine_neighborhoods(fits, MbRule::or_rule));
  }
  return out;
}

}  // namespace ggmko
