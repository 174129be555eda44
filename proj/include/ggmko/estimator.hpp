#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include "ggmko/data.hpp"
#include "ggmko/error.hpp"
#include "ggmko/numeric.hpp"
#include "ggmko/random.hpp"

namespace ggmko {

/// Sample or population partial correlations: unit diagonal, off-diagonals in (-1, 1).
struct PartialCorrelationMatrix {
  SymmetricMatrix values;
  std::size_t dim() const noexcept { return values.dim(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// Knockoff partial correlations drawn from the null law with `dof` degrees of freedom.
struct KnockoffMatrix {
  SymmetricMatrix values;
  long dof = 0;
  std::size_t dim() const noexcept { return values.dim(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// Entry points on the hard-thresholding path; zero diagonal.
struct EntryStatistics {
  SymmetricMatrix values;
  std::size_t dim() const noexcept { return values.dim(); }
  double operator()(std::size_t i, std::size_t j) const { return values(i, j); }
};

/// Signed comparison of each sample entry with its knockoff.
struct TestMatrix {
  SymmetricMatrix w;
  EntryStatistics sample;
  EntryStatistics knockoff;
  std::optional<SymmetricMatrix> signal;  // the R the statistics were computed from

  std::size_t dim() const noexcept { return w.dim(); }
  double operator()(std::size_t i, std::size_t j) const { return w(i, j); }
};

enum class Scheme { ko, ko_plus };

constexpr std::string_view to_string(Scheme s) noexcept { return s == Scheme::ko ? "ko" : "ko+"; }

inline Scheme parse_scheme(std::string_view s) {
  if (s == "ko" || s == "KO") return Scheme::ko;
  if (s == "ko+" || s == "KO+" || s == "ko_plus") return Scheme::ko_plus;
  throw error(errc::invalid_argument, "unknown scheme '" + std::string(s) + "' (valid: ko, ko+)");
}

struct SelectionResult {
  double threshold = std::numeric_limits<double>::infinity();
  EdgeSet selected;
  std::map<Edge, double> retained;  // R values of the selected edges, when R is known
  double q = 0.0;
  Scheme scheme = Scheme::ko;

  bool finite() const noexcept { return std::isfinite(threshold); }
};

enum class Inversion {
  cholesky,       // requires a positive definite Gram matrix
  pseudo_inverse  // Moore-Penrose; for rank-deficient inputs such as CLR coordinates
};

inline PartialCorrelationMatrix precision_to_partial_unchecked(const SymmetricMatrix& omega) {
  const std::size_t p = omega.dim();
  SymmetricMatrix r(p, 1.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) {
      const double denom = std::sqrt(omega(i, i) * omega(j, j));
      r.set(i, j, denom > 0.0 ? -omega(i, j) / denom : 0.0);
    }
  return {std::move(r)};
}

/// Population partial correlations -Omega_ij / sqrt(Omega_ii Omega_jj).
inline PartialCorrelationMatrix precision_to_partial(const SymmetricMatrix& omega) {
  (void)cholesky(omega);
  return precision_to_partial_unchecked(omega);
}

/// Sample partial correlations from the Gram matrix X^T X (no centering, no 1/n).
inline PartialCorrelationMatrix partial_correlations(const DataMatrix& x,
                                                     Inversion inversion = Inversion::cholesky) {
  if (x.n() <= x.p())
    throw error(errc::sample_size_too_small, "need n > p, got n=" + std::to_string(x.n()) +
                                                 ", p=" + std::to_string(x.p()));
  x.require_finite();
  const SymmetricMatrix gram = cross_product(x.values);
  if (inversion == Inversion::pseudo_inverse)
    return precision_to_partial_unchecked(pseudo_inverse_psd(gram));
  try {
    return precision_to_partial_unchecked(invert_spd(gram));
  } catch (const error& e) {
    if (e.code() == errc::not_positive_definite)
      throw error(errc::degenerate_column, std::string("sample Gram matrix is singular (") +
                                               e.what() + ")");
    throw;
  }
}

/// The pivot R / sqrt((1 - R^2) / (n - p)), Student-t with n - p dof under the null.
inline double null_t_statistic(double r, std::size_t n, std::size_t p) {
  return r / std::sqrt((1.0 - r * r) / static_cast<double>(n - p));
}

/// Inverse of the pivot: maps a t draw to a partial-correlation-scale entry.
inline double knockoff_entry(double z, long dof) {
  return z / std::sqrt(static_cast<double>(dof) + z * z);
}

/// One t_{n-p} draw per unordered pair (row-major over i < j), mirrored.
inline KnockoffMatrix make_knockoffs(RngStream& rng, std::size_t n, std::size_t p) {
  if (n <= p) throw error(errc::sample_size_too_small, "knockoffs need n > p");
  const long dof = static_cast<long>(n - p);
  SymmetricMatrix r(p, 1.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) r.set(i, j, knockoff_entry(student_t(rng, dof), dof));
  return {std::move(r), dof};
}

/// Hard thresholding keeps entry (i, j) exactly while t < |m_ij|, so the entry
/// point on the path is the magnitude itself.
inline EntryStatistics entry_statistics(const SymmetricMatrix& m) {
  const std::size_t p = m.dim();
  SymmetricMatrix t(p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) t.set(i, j, std::abs(m(i, j)));
  return {std::move(t)};
}

inline EntryStatistics entry_statistics(const PartialCorrelationMatrix& r) {
  return entry_statistics(r.values);
}
inline EntryStatistics entry_statistics(const KnockoffMatrix& r) {
  return entry_statistics(r.values);
}

inline double signed_max(double t, double t0) {
  const double sign = (t > t0) ? 1.0 : (t < t0 ? -1.0 : 0.0);
  return sign == 0.0 ? 0.0 : std::max(t, t0) * sign;
}

inline TestMatrix test_matrix(const EntryStatistics& t, const EntryStatistics& t0) {
  if (t.dim() != t0.dim())
    throw error(errc::dimension_mismatch, "entry statistics have different dimensions");
  const std::size_t p = t.dim();
  SymmetricMatrix w(p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) w.set(i, j, signed_max(t(i, j), t0(i, j)));
  return {std::move(w), t, t0, std::nullopt};
}

/// Steps 1-2 of the pipeline given R and its knockoff; keeps R for retained values.
inline TestMatrix build_test_matrix(const PartialCorrelationMatrix& r, const KnockoffMatrix& r0) {
  TestMatrix w = test_matrix(entry_statistics(r), entry_statistics(r0));
  w.signal = r.values;
  return w;
}

namespace detail {

inline void require_q(double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw error(errc::invalid_q, "q must lie in [0, 1]");
}

inline SelectionResult threshold_impl(const TestMatrix& w, double q, Scheme scheme) {
  require_q(q);
  const std::size_t p = w.dim();
  std::vector<double> positive;
  std::vector<double> negative;
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j) {
      const double v = w(i, j);
      if (v > 0.0) positive.push_back(v);
      else if (v < 0.0) negative.push_back(-v);
    }
  std::sort(positive.begin(), positive.end());
  std::sort(negative.begin(), negative.end());

  std::vector<double> candidates;
  candidates.reserve(positive.size() + negative.size());
  std::merge(positive.begin(), positive.end(), negative.begin(), negative.end(),
             std::back_inserter(candidates));
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

  const double offset = scheme == Scheme::ko_plus ? 1.0 : 0.0;
  auto at_least = [](const std::vector<double>& sorted, double t) {
    return static_cast<double>(sorted.end() - std::lower_bound(sorted.begin(), sorted.end(), t));
  };

  SelectionResult out;
  out.q = q;
  out.scheme = scheme;
  for (double t : candidates) {
    const double num = at_least(negative, t) + offset;
    const double den = std::max(at_least(positive, t), 1.0);
    if (num / den <= q) {
      out.threshold = t;
      break;
    }
  }
  if (out.finite()) {
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j)
        if (w(i, j) >= out.threshold) {
          out.selected.emplace(i, j);
          if (w.signal) out.retained.emplace(Edge(i, j), (*w.signal)(i, j));
        }
  }
  return out;
}

}  // namespace detail

/// Smallest candidate t with #{W <= -t} / max(#{W >= t}, 1) <= q; counts run over i < j.
inline SelectionResult ko_threshold(const TestMatrix& w, double q) {
  return detail::threshold_impl(w, q, Scheme::ko);
}

/// As ko_threshold with one added to the numerator.
inline SelectionResult ko_plus_threshold(const TestMatrix& w, double q) {
  return detail::threshold_impl(w, q, Scheme::ko_plus);
}

inline SelectionResult select_edges(const TestMatrix& w, double q, Scheme scheme) {
  return detail::threshold_impl(w, q, scheme);
}

struct EstimateOptions {
  bool center = false;
  Inversion inversion = Inversion::cholesky;
};

/// Full pipeline: partial correlations, knockoffs, test matrix, threshold.
inline SelectionResult estimate_graph(const DataMatrix& x, double q, RngStream& rng, Scheme scheme,
                                      const EstimateOptions& options = {}) {
  detail::require_q(q);
  if (x.n() <= x.p())
    throw error(errc::sample_size_too_small, "need n > p, got n=" + std::to_string(x.n()) +
                                                 ", p=" + std::to_string(x.p()));
  const PartialCorrelationMatrix r =
      partial_correlations(options.center ? center_columns(x) : x, options.inversion);
  const KnockoffMatrix r0 = make_knockoffs(rng, x.n(), x.p());
  return select_edges(build_test_matrix(r, r0), q, scheme);
}

/// Exchanges the entries of R and R-knockoff indexed by `swap` (both triangles).
inline std::pair<PartialCorrelationMatrix, KnockoffMatrix> swap_entries(
    const PartialCorrelationMatrix& r, const KnockoffMatrix& r0, const EdgeSet& swap) {
  if (r.dim() != r0.dim()) throw error(errc::dimension_mismatch, "swap inputs differ in size");
  PartialCorrelationMatrix rs = r;
  KnockoffMatrix r0s = r0;
  for (const Edge& e : swap) {
    if (e.i == e.j) throw error(errc::diagonal_in_swap_set, "swap set contains a diagonal entry");
    if (e.j >= r.dim()) throw error(errc::dimension_mismatch, "swap index out of range");
    rs.values.set(e.i, e.j, r0(e.i, e.j));
    r0s.values.set(e.i, e.j, r(e.i, e.j));
  }
  return {std::move(rs), std::move(r0s)};
}

}  // namespace ggmko
