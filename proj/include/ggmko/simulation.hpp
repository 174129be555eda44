#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "ggmko/baselines.hpp"
#include "ggmko/data.hpp"
#include "ggmko/error.hpp"
#include "ggmko/estimator.hpp"
#include "ggmko/numeric.hpp"
#include "ggmko/random.hpp"

namespace ggmko {

// ---------------------------------------------------------------------------
// Ground truth

struct GroundTruthModel {
  std::size_t p = 0;
  SymmetricMatrix precision;   // inverse of `covariance`
  SymmetricMatrix covariance;  // unit diagonal
  EdgeSet edges;               // nonzero precision entries
  EdgeSet marginal_edges;      // nonzero covariance entries
  double condition_number_unscaled = 0.0;  // of the precision before diagonal rescaling
  double condition_number_rescaled = 0.0;  // of `covariance`
};

inline EdgeSet nonzero_pattern(const SymmetricMatrix& m, double zero_tol) {
  EdgeSet out;
  for (std::size_t i = 0; i < m.dim(); ++i)
    for (std::size_t j = i + 1; j < m.dim(); ++j)
      if (std::abs(m(i, j)) > zero_tol) out.emplace(i, j);
  return out;
}

/// Fraction of node pairs that are edges in a band graph.
inline double band_sparsity(std::size_t p, std::size_t bandwidth) {
  return static_cast<double>(bandwidth * (2 * p - bandwidth - 1)) /
         static_cast<double>(p * (p - 1));
}

/// Bandwidth whose sparsity is closest to `target` (1/25 by default).
inline std::size_t default_bandwidth(std::size_t p, double target = 1.0 / 25.0) {
  std::size_t best = 1;
  for (std::size_t b = 1; b < p; ++b)
    if (std::abs(band_sparsity(p, b) - target) < std::abs(band_sparsity(p, best) - target))
      best = b;
  return best;
}

/// Band precision B (unit diagonal, `strength` within the band) shifted by
/// delta * I; the covariance is its inverse rescaled to unit diagonal. delta
/// is solved so the rescaled covariance has condition number `kappa`.
inline GroundTruthModel band_graph(std::size_t p, std::size_t bandwidth, double strength,
                                   double kappa) {
  if (p < 2 || bandwidth < 1 || bandwidth >= p)
    throw error(errc::invalid_argument, "band graph needs 1 <= bandwidth < p");
  if (strength == 0.0) throw error(errc::invalid_argument, "band strength must be nonzero");
  if (!(kappa > 1.0)) throw error(errc::invalid_argument, "condition number must exceed 1");

  SymmetricMatrix band(p, 1.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j <= std::min(p - 1, i + bandwidth); ++j) band.set(i, j, strength);
  const auto ev = symmetric_eigenvalues(band);

  // Model for a given smallest eigenvalue s = lambda_min(B) + delta of the precision.
  auto build = [&](double s) {
    const double delta = s - ev.front();
    SymmetricMatrix omega = band;
    for (std::size_t i = 0; i < p; ++i) omega.set(i, i, band(i, i) + delta);
    const SymmetricMatrix sigma_raw = invert_spd(omega);
    GroundTruthModel m;
    m.p = p;
    m.condition_number_unscaled = (ev.back() + delta) / s;
    m.covariance = SymmetricMatrix(p, 1.0);
    m.precision = SymmetricMatrix(p);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i; j < p; ++j) {
        const double di = sigma_raw(i, i);
        const double dj = sigma_raw(j, j);
        if (i != j) m.covariance.set(i, j, sigma_raw(i, j) / std::sqrt(di * dj));
        m.precision.set(i, j, omega(i, j) * std::sqrt(di * dj));
      }
    m.condition_number_rescaled = condition_number(m.covariance);
    return m;
  };

  // Start from the shift that gives the unscaled precision condition number
  // kappa, bracket the root in log s, then bisect.
  const double delta0 = (ev.back() - kappa * ev.front()) / (kappa - 1.0);
  const double s0 = ev.front() + delta0;
  if (!(s0 > 0.0))
    throw error(errc::infeasible_shift, "eigen-shift leaves the precision matrix indefinite");
  GroundTruthModel m = build(s0);
  double lo = s0, hi = s0;
  if (m.condition_number_rescaled > kappa) {
    for (int k = 0; build(hi).condition_number_rescaled > kappa; ++k) {
      if (k == 200) throw error(errc::infeasible_shift, "cannot bracket the condition number");
      lo = hi;
      hi *= 2.0;
    }
  } else {
    for (int k = 0; build(lo).condition_number_rescaled < kappa; ++k) {
      if (k == 200) throw error(errc::infeasible_shift, "cannot bracket the condition number");
      hi = lo;
      lo *= 0.5;
    }
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = std::sqrt(lo * hi);
    m = build(mid);
    const double gap = m.condition_number_rescaled - kappa;
    if (std::abs(gap) <= tolerances::condition_number_rel * kappa) break;
    (gap > 0.0 ? lo : hi) = mid;
  }
  m.edges = nonzero_pattern(m.precision, 0.0);
  m.marginal_edges = nonzero_pattern(m.covariance, tolerances::marginal_zero);
  return m;
}

/// Block-diagonal equicorrelated covariance; conditional and marginal edge sets coincide.
inline GroundTruthModel block_graph(std::size_t p, std::size_t block_size, double strength) {
  if (p < 1 || block_size < 1 || p % block_size != 0)
    throw error(errc::invalid_argument, "block size must divide p");
  GroundTruthModel m;
  m.p = p;
  m.covariance = SymmetricMatrix(p, 1.0);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i + 1; j < p; ++j)
      if (i / block_size == j / block_size) m.covariance.set(i, j, strength);
  m.precision = invert_spd(m.covariance);
  m.condition_number_rescaled = condition_number(m.covariance);
  m.condition_number_unscaled = m.condition_number_rescaled;
  m.edges = nonzero_pattern(m.precision, tolerances::block_zero);
  m.marginal_edges = nonzero_pattern(m.covariance, tolerances::block_zero);
  if (m.edges != m.marginal_edges)
    throw error(errc::invalid_argument, "block model has differing conditional and marginal graphs");
  return m;
}

// ---------------------------------------------------------------------------
// Metrics

/// False discovery proportion with the max(., 1) guard.
inline double fdp(const EdgeSet& selected, const EdgeSet& truth) {
  std::size_t false_count = 0;
  for (const auto& e : selected)
    if (!truth.contains(e)) ++false_count;
  return static_cast<double>(false_count) /
         static_cast<double>(std::max<std::size_t>(selected.size(), 1));
}

inline double power(const EdgeSet& selected, const EdgeSet& truth) {
  std::size_t hits = 0;
  for (const auto& e : selected)
    if (truth.contains(e)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(std::max<std::size_t>(truth.size(), 1));
}

inline std::size_t count_outside(const EdgeSet& selected, const EdgeSet& truth) {
  std::size_t n = 0;
  for (const auto& e : selected)
    if (!truth.contains(e)) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

inline double ks_statistic(std::span<const double> sample,
                           const std::function<double(double)>& reference_cdf) {
  if (sample.empty()) throw error(errc::empty_sample, "KS statistic of an empty sample");
  std::vector<double> s(sample.begin(), sample.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = reference_cdf(s[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

inline double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw error(errc::empty_sample, "KS statistic of an empty sample");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / nx - static_cast<double>(j) / ny));
  }
  return d;
}

/// Asymptotic critical value c(alpha) / sqrt(n), c(alpha) = sqrt(-ln(alpha / 2) / 2).
inline double ks_critical_value(std::size_t n, double alpha = 0.001) {
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) / std::sqrt(static_cast<double>(n));
}

inline double ks_critical_value_two_sample(std::size_t n, std::size_t m, double alpha = 0.001) {
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  return std::sqrt(-0.5 * std::log(alpha / 2.0)) * std::sqrt((dn + dm) / (dn * dm));
}

// ---------------------------------------------------------------------------
// Monte Carlo driver

enum class GraphKind { band, block };

enum class Method { ko, ko_plus, ct, pt, mb_and, mb_or };

inline constexpr Method all_methods[] = {Method::ko, Method::ko_plus, Method::ct,
                                         Method::pt, Method::mb_and,  Method::mb_or};

constexpr std::string_view to_string(Method m) noexcept {
  switch (m) {
    case Method::ko: return "ko";
    case Method::ko_plus: return "ko+";
    case Method::ct: return "ct";
    case Method::pt: return "pt";
    case Method::mb_and: return "mb_and";
    case Method::mb_or: return "mb_or";
  }
  return "?";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (Method m : all_methods)
    if (to_string(m) == s) return m;
  if (s == "ko_plus") return Method::ko_plus;
  return std::nullopt;
}

constexpr std::string_view to_string(GraphKind k) noexcept {
  return k == GraphKind::band ? "band" : "block";
}

struct SimulationConfig {
  GraphKind kind = GraphKind::band;
  std::size_t p = 40;
  std::size_t n = 200;
  std::size_t bandwidth = 0;   // 0: chosen for sparsity 1/25
  std::size_t block_size = 4;
  std::optional<double> strength;  // default -0.4 (band) or 0.3 (block)
  double kappa = 200.0;
  std::size_t replicates = 100;
  std::vector<double> q_grid = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
  std::uint64_t seed = 0;
  std::vector<Method> methods = {Method::ko, Method::ko_plus};
  std::size_t grid_points = 50;

  double resolved_strength() const {
    return strength ? *strength : (kind == GraphKind::band ? -0.4 : 0.3);
  }
  std::size_t resolved_bandwidth() const { return bandwidth ? bandwidth : default_bandwidth(p); }

  void validate() const {
    if (p < 2) throw error(errc::invalid_argument, "p must be at least 2");
    if (n == 0) throw error(errc::invalid_argument, "n must be positive");
    if (n <= p)
      throw error(errc::sample_size_too_small, "need n > p, got n=" + std::to_string(n) +
                                                   ", p=" + std::to_string(p));
    if (replicates == 0) throw error(errc::invalid_argument, "replicates must be positive");
    if (methods.empty()) throw error(errc::invalid_argument, "no methods requested");
    if (grid_points == 0) throw error(errc::invalid_argument, "grid_points must be positive");
    for (double q : q_grid)
      if (!(q >= 0.0 && q <= 1.0)) throw error(errc::invalid_q, "q grid must lie in [0, 1]");
  }

  GroundTruthModel model() const {
    return kind == GraphKind::band
               ? band_graph(p, resolved_bandwidth(), resolved_strength(), kappa)
               : block_graph(p, block_size, resolved_strength());
  }
};

struct MetricsRow {
  Method method = Method::ko;
  double tuning = 0.0;  // q for KO/KO+, threshold for CT/PT, lambda for MB
  std::size_t replicate = 0;
  double fdp = 0.0;
  double power = 0.0;
  std::size_t n_selected = 0;
  double threshold = 0.0;
  std::size_t false_vs_marginal = 0;  // selections outside the marginal graph
};

struct MetricsAggregate {
  Method method = Method::ko;
  double tuning = 0.0;
  double fdr = 0.0;
  double fdr_se = 0.0;
  double power = 0.0;
  double power_se = 0.0;
  double mean_selected = 0.0;
};

struct MetricsRecord {
  std::vector<MetricsRow> rows;  // replicate-major, then method, then tuning
  std::vector<MetricsAggregate> aggregates;
  std::size_t edge_count = 0;
  std::size_t marginal_edge_count = 0;
  double condition_number_unscaled = 0.0;
  double condition_number_rescaled = 0.0;
};

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_and_se(std::span<const double> v) {
  MeanSe out;
  if (v.empty()) return out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  if (v.size() < 2) return out;
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
  return out;
}

/// Baseline tuning grids, fixed across replicates so curves can be averaged.
/// The top of each grid is the largest population value plus four standard
/// errors of the sample estimate, so the sparse end of every path is reached.
struct TuningGrids {
  std::vector<double> ct;
  std::vector<double> pt;
  std::vector<double> mb;

  static TuningGrids from_model(const GroundTruthModel& model, std::size_t n, std::size_t points) {
    double max_corr = 0.0;
    double max_partial = 0.0;
    const auto rho = precision_to_partial(model.precision);
    for (std::size_t i = 0; i < model.p; ++i)
      for (std::size_t j = i + 1; j < model.p; ++j) {
        max_corr = std::max(max_corr, std::abs(model.covariance(i, j)));
        max_partial = std::max(max_partial, std::abs(rho(i, j)));
      }
    const auto dof = static_cast<double>(n > model.p ? n - model.p : 1);
    max_corr = std::min(1.0, max_corr + 4.0 / std::sqrt(static_cast<double>(n)));
    max_partial = std::min(1.0, max_partial + 4.0 / std::sqrt(dof));
    return {linear_grid(max_corr, points), linear_grid(max_partial, points),
            log_grid(max_corr, 100.0, points)};
  }
};

namespace detail {

inline void append_path(std::vector<MetricsRow>& rows, Method method, const PathResult& path,
                        const GroundTruthModel& model, std::size_t replicate) {
  for (std::size_t k = 0; k < path.grid.size(); ++k) {
    MetricsRow row;
    row.method = method;
    row.tuning = path.grid[k];
    row.replicate = replicate;
    row.fdp = fdp(path.edges[k], model.edges);
    row.power = power(path.edges[k], model.edges);
    row.n_selected = path.edges[k].size();
    row.threshold = path.grid[k];
    row.false_vs_marginal = count_outside(path.edges[k], model.marginal_edges);
    rows.push_back(row);
  }
}

}  // namespace detail

/// Stream ids: replicate r draws its data from stream 2r and its knockoffs from 2r + 1.
inline std::vector<MetricsRow> simulate_replicate(const SimulationConfig& cfg,
                                                  const GroundTruthModel& model,
                                                  const TuningGrids& grids, std::size_t replicate) {
  RngStream data_rng(cfg.seed, 2 * replicate);
  RngStream knockoff_rng(cfg.seed, 2 * replicate + 1);
  const DataMatrix x = sample_mvn(data_rng, model.covariance, cfg.n);

  std::optional<PartialCorrelationMatrix> r;
  auto partials = [&]() -> const PartialCorrelationMatrix& {
    if (!r) r = partial_correlations(x);
    return *r;
  };
  std::optional<TestMatrix> w;
  std::optional<MbPaths> mb;

  std::vector<MetricsRow> rows;
  for (Method method : cfg.methods) {
    switch (method) {
      case Method::ko:
      case Method::ko_plus: {
        if (!w) w = build_test_matrix(partials(), make_knockoffs(knockoff_rng, x.n(), x.p()));
        const Scheme scheme = method == Method::ko ? Scheme::ko : Scheme::ko_plus;
        for (double q : cfg.q_grid) {
          const SelectionResult sel = select_edges(*w, q, scheme);
          MetricsRow row;
          row.method = method;
          row.tuning = q;
          row.replicate = replicate;
          row.fdp = fdp(sel.selected, model.edges);
          row.power = power(sel.selected, model.edges);
          row.n_selected = sel.selected.size();
          row.threshold = sel.threshold;
          row.false_vs_marginal = count_outside(sel.selected, model.marginal_edges);
          rows.push_back(row);
        }
        break;
      }
      case Method::ct:
        detail::append_path(rows, method, threshold_graph(sample_correlations(x), grids.ct), model,
                            replicate);
        break;
      case Method::pt:
        detail::append_path(rows, method, threshold_graph(partials().values, grids.pt), model,
                            replicate);
        break;
      case Method::mb_and:
      case Method::mb_or:
        if (!mb) mb = mb_paths(x, grids.mb);
        detail::append_path(rows, method, method == Method::mb_and ? mb->and_rule : mb->or_rule,
                            model, replicate);
        break;
    }
  }
  return rows;
}

/// Runs `task(r)` for r in [0, count) on `threads` workers. A failure is
/// reported for the lowest failing index.
inline void parallel_for(std::size_t count, std::size_t threads,
                         const std::function<void(std::size_t)>& task) {
  std::vector<std::exception_ptr> failures(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < count; r = next++) {
      try {
        task(r);
      } catch (...) {
        failures[r] = std::current_exception();
      }
    }
  };
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(count, 1));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t r = 0; r < count; ++r) {
    if (!failures[r]) continue;
    try {
      std::rethrow_exception(failures[r]);
    } catch (const error& e) {
      throw error(e.code(), "replicate " + std::to_string(r) + ": " + e.what());
    } catch (const std::exception& e) {
      throw error(errc::invalid_argument, "replicate " + std::to_string(r) + ": " + e.what());
    }
  }
}

inline std::vector<MetricsAggregate> aggregate_rows(const std::vector<MetricsRow>& rows) {
  // Key by (method, tuning) in first-seen order; rows arrive replicate-major.
  std::vector<std::pair<Method, double>> keys;
  std::map<std::pair<int, double>, std::size_t> index;
  std::vector<std::vector<const MetricsRow*>> groups;
  for (const auto& row : rows) {
    const auto key = std::make_pair(static_cast<int>(row.method), row.tuning);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, keys.size()).first;
      keys.emplace_back(row.method, row.tuning);
      groups.emplace_back();
    }
    groups[it->second].push_back(&row);
  }
  std::vector<MetricsAggregate> out;
  for (std::size_t g = 0; g < keys.size(); ++g) {
    std::vector<double> f;
    std::vector<double> pw;
    double selected = 0.0;
    for (const MetricsRow* row : groups[g]) {
      f.push_back(row->fdp);
      pw.push_back(row->power);
      selected += static_cast<double>(row->n_selected);
    }
    const MeanSe fs = mean_and_se(f);
    const MeanSe ps = mean_and_se(pw);
    out.push_back({keys[g].first, keys[g].second, fs.mean, fs.se, ps.mean, ps.se,
                   selected / static_cast<double>(groups[g].size())});
  }
  return out;
}

inline MetricsRecord run_monte_carlo(const SimulationConfig& cfg, std::size_t threads = 1) {
  cfg.validate();
  const GroundTruthModel model = cfg.model();
  const TuningGrids grids = TuningGrids::from_model(model, cfg.n, cfg.grid_points);

  std::vector<std::vector<MetricsRow>> per_replicate(cfg.replicates);
  parallel_for(cfg.replicates, threads, [&](std::size_t r) {
    per_replicate[r] = simulate_replicate(cfg, model, grids, r);
  });

  MetricsRecord record;
  for (auto& rows : per_replicate) record.rows.insert(record.rows.end(), rows.begin(), rows.end());
  record.aggregates = aggregate_rows(record.rows);
  record.edge_count = model.edges.size();
  record.marginal_edge_count = model.marginal_edges.size();
  record.condition_number_unscaled = model.condition_number_unscaled;
  record.condition_number_rescaled = model.condition_number_rescaled;
  return record;
}

/// Per-replicate ratios #{selected outside E'} / (#selected + 1/q) for `method` at `q`.
inline std::vector<double> modified_fdr_ratios(const MetricsRecord& record, double q,
                                               Method method = Method::ko) {
  std::vector<double> out;
  const double inv_q = q > 0.0 ? 1.0 / q : std::numeric_limits<double>::infinity();
  for (const auto& row : record.rows)
    if (row.method == method && row.tuning == q)
      out.push_back(static_cast<double>(row.false_vs_marginal) /
                    (static_cast<double>(row.n_selected) + inv_q));
  return out;
}

/// Monte Carlo mean of the marginal-graph ratio bounded by the approximate-control guarantee.
inline double modified_fdr_estimate(const MetricsRecord& record, double q,
                                    Method method = Method::ko) {
  const auto ratios = modified_fdr_ratios(record, q, method);
  return mean_and_se(ratios).mean;
}

inline const MetricsAggregate* find_aggregate(const MetricsRecord& record, Method method,
                                              double tuning) {
  for (const auto& a : record.aggregates)
    if (a.method == method && a.tuning == tuning) return &a;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Serialization

inline std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

/// Long format: method,q_or_lambda,replicate,fdp,power,n_selected,threshold
inline std::string rows_to_csv(const MetricsRecord& record) {
  std::ostringstream os;
  os << "method,q_or_lambda,replicate,fdp,power,n_selected,threshold\n";
  for (const auto& r : record.rows)
    os << to_string(r.method) << ',' << format_number(r.tuning) << ',' << r.replicate << ','
       << format_number(r.fdp) << ',' << format_number(r.power) << ',' << r.n_selected << ','
       << format_number(r.threshold) << '\n';
  return os.str();
}

inline std::string aggregates_to_csv(const MetricsRecord& record) {
  std::ostringstream os;
  os << "method,q_or_lambda,fdr,fdr_se,power,power_se,mean_selected\n";
  for (const auto& a : record.aggregates)
    os << to_string(a.method) << ',' << format_number(a.tuning) << ',' << format_number(a.fdr)
       << ',' << format_number(a.fdr_se) << ',' << format_number(a.power) << ','
       << format_number(a.power_se) << ',' << format_number(a.mean_selected) << '\n';
  return os.str();
}

}  // namespace ggmko
