#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ggmko/data.hpp"
#include "ggmko/error.hpp"
#include "ggmko/estimator.hpp"
#include "ggmko/numeric.hpp"
#include "ggmko/random.hpp"

namespace ggmko {

/// n samples x p nonnegative feature abundances, optionally labelled by group.
struct AbundanceTable {
  Matrix values;
  std::vector<std::string> feature_names;
  std::vector<std::string> groups;  // empty or one label per sample

  std::size_t n() const noexcept { return values.rows(); }
  std::size_t p() const noexcept { return values.cols(); }

  void validate() const {
    if (feature_names.size() != p())
      throw error(errc::dimension_mismatch, "feature name count does not match columns");
    if (std::set<std::string>(feature_names.begin(), feature_names.end()).size() != p())
      throw error(errc::invalid_argument, "feature names must be unique");
    if (!groups.empty() && groups.size() != n())
      throw error(errc::dimension_mismatch, "group label count does not match rows");
    for (double v : values.values())
      if (!(v >= 0.0) || !std::isfinite(v))
        throw error(errc::invalid_argument, "abundances must be finite and nonnegative");
  }

  AbundanceTable select_rows(const std::vector<std::size_t>& rows) const {
    AbundanceTable out;
    out.values = Matrix(rows.size(), p());
    out.feature_names = feature_names;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto src = values.row(rows[r]);
      std::copy(src.begin(), src.end(), out.values.row(r).begin());
      if (!groups.empty()) out.groups.push_back(groups[rows[r]]);
    }
    return out;
  }

  /// Distinct group labels in first-appearance order.
  std::vector<std::string> group_labels() const {
    std::vector<std::string> out;
    for (const auto& g : groups)
      if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
    return out;
  }

  AbundanceTable group(const std::string& label) const {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < groups.size(); ++i)
      if (groups[i] == label) rows.push_back(i);
    return select_rows(rows);
  }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

/// Splits one CSV record; supports double-quoted fields with "" escapes.
inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back(trim(field));
      field.clear();
    } else {
      field += c;
    }
  }
  if (quoted) throw error(errc::parse_error, "unterminated quote");
  out.emplace_back(trim(field));
  return out;
}

inline double parse_double(std::string_view s, std::size_t line_no) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw error(errc::parse_error,
                "line " + std::to_string(line_no) + ": '" + std::string(s) + "' is not a number");
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
};

inline CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto fields = split_csv_line(line);
    if (t.header.empty()) {
      t.header = std::move(fields);
      continue;
    }
    if (fields.size() != t.header.size())
      throw error(errc::parse_error, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(t.header.size()) + " fields, got " +
                                         std::to_string(fields.size()));
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (t.header.empty()) throw error(errc::parse_error, "empty CSV");
  return t;
}

}  // namespace detail

/// Numeric CSV with a header of column names. A column named `group_column`
/// (if present) is kept as row labels and removed from the data.
inline AbundanceTable read_table_csv(std::istream& in, const std::string& group_column = "__group__") {
  const auto csv = detail::read_csv(in);
  AbundanceTable t;
  std::optional<std::size_t> group_idx;
  for (std::size_t j = 0; j < csv.header.size(); ++j) {
    if (csv.header[j] == group_column) group_idx = j;
    else t.feature_names.push_back(csv.header[j]);
  }
  if (std::set<std::string>(t.feature_names.begin(), t.feature_names.end()).size() !=
      t.feature_names.size())
    throw error(errc::parse_error, "duplicate column names");
  t.values = Matrix(csv.rows.size(), t.feature_names.size());
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    std::size_t col = 0;
    for (std::size_t j = 0; j < csv.header.size(); ++j) {
      if (group_idx && j == *group_idx) {
        t.groups.push_back(csv.rows[i][j]);
        continue;
      }
      const double v = detail::parse_double(csv.rows[i][j], csv.line_numbers[i]);
      if (!std::isfinite(v))
        throw error(errc::parse_error, "line " + std::to_string(csv.line_numbers[i]) +
                                           ": non-finite value");
      t.values(i, col++) = v;
    }
  }
  return t;
}

inline DataMatrix to_data_matrix(const AbundanceTable& t) { return DataMatrix(t.values, t.feature_names); }

/// Centered log-ratio per row: log(x + pseudocount) minus the row mean of the logs.
inline DataMatrix clr_transform(const AbundanceTable& t, double pseudocount) {
  DataMatrix out(Matrix(t.n(), t.p()), t.feature_names);
  for (std::size_t i = 0; i < t.n(); ++i) {
    const auto in = t.values.row(i);
    auto row = out.values.row(i);
    double mean = 0.0;
    for (std::size_t j = 0; j < t.p(); ++j) {
      const double shifted = in[j] + pseudocount;
      if (!(shifted > 0.0))
        throw error(errc::non_positive_after_pseudocount,
                    "row " + std::to_string(i) + ", feature '" + t.feature_names[j] + "'");
      row[j] = std::log(shifted);
      mean += row[j];
    }
    mean /= static_cast<double>(t.p());
    for (double& v : row) v -= mean;
  }
  return out;
}

/// Keeps features that are nonzero in at least ceil(min_fraction * n) samples.
inline AbundanceTable prevalence_filter(const AbundanceTable& t, double min_fraction) {
  if (!(min_fraction >= 0.0 && min_fraction <= 1.0))
    throw error(errc::invalid_argument, "min_fraction must lie in [0, 1]");
  const auto needed = static_cast<std::size_t>(std::ceil(min_fraction * static_cast<double>(t.n()) - 1e-9));
  std::vector<std::size_t> keep;
  for (std::size_t j = 0; j < t.p(); ++j) {
    std::size_t present = 0;
    for (std::size_t i = 0; i < t.n(); ++i)
      if (t.values(i, j) != 0.0) ++present;
    if (present >= needed) keep.push_back(j);
  }
  if (keep.empty()) throw error(errc::all_features_filtered, "no feature meets the prevalence bound");
  AbundanceTable out;
  out.groups = t.groups;
  out.values = Matrix(t.n(), keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.feature_names.push_back(t.feature_names[keep[k]]);
    for (std::size_t i = 0; i < t.n(); ++i) out.values(i, k) = t.values(i, keep[k]);
  }
  return out;
}

/// m distinct rows, uniformly without replacement (partial Fisher-Yates, draw order kept).
inline AbundanceTable subsample_rows(RngStream& rng, const AbundanceTable& t, std::size_t m) {
  if (m > t.n())
    throw error(errc::subsample_too_large, "cannot draw " + std::to_string(m) + " of " +
                                                std::to_string(t.n()) + " rows");
  std::vector<std::size_t> idx(t.n());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  for (std::size_t k = 0; k < m; ++k) {
    const std::size_t pick = k + static_cast<std::size_t>(rng.uniform_index(t.n() - k));
    std::swap(idx[k], idx[pick]);
  }
  idx.resize(m);
  return t.select_rows(idx);
}

/// Scaled cumulative signal strengths sum_k |R^k(t_k)| / max over entries.
struct SignalStrengthMatrix {
  SymmetricMatrix values;
  std::vector<double> thresholds;  // one per run, +inf when a run selected nothing
  std::vector<double> targets;     // q used for each run
  bool all_zero = true;

  std::size_t dim() const noexcept { return values.dim(); }
};

inline SignalStrengthMatrix aggregate_signal_strengths(const std::vector<SelectionResult>& runs,
                                                       std::size_t p) {
  SignalStrengthMatrix out;
  SymmetricMatrix sum(p);
  for (const auto& run : runs) {
    out.thresholds.push_back(run.threshold);
    out.targets.push_back(run.q);
    for (const auto& [edge, value] : run.retained) {
      if (edge.j >= p) throw error(errc::dimension_mismatch, "selection exceeds matrix size");
      sum.set(edge.i, edge.j, sum(edge.i, edge.j) + std::abs(value));
    }
  }
  const double max = sum.max_abs();
  out.all_zero = max == 0.0;
  out.values = SymmetricMatrix(p);
  if (!out.all_zero)
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j) out.values.set(i, j, sum(i, j) / max);
  return out;
}

/// Multiple-FDR scheme: run k (1-based) is estimated at q_k = base_q * 0.5^k.
inline SignalStrengthMatrix multi_fdr_aggregate(const std::vector<DataMatrix>& runs, double base_q,
                                                RngStream& rng, Scheme scheme = Scheme::ko,
                                                const EstimateOptions& options = {}) {
  if (runs.empty()) throw error(errc::invalid_argument, "no runs to aggregate");
  if (!(base_q > 0.0 && base_q <= 1.0)) throw error(errc::invalid_q, "base q must lie in (0, 1]");
  const std::size_t p = runs.front().p();
  std::vector<SelectionResult> selections;
  double q = base_q;
  for (const auto& x : runs) {
    if (x.p() != p) throw error(errc::dimension_mismatch, "runs differ in feature count");
    q *= 0.5;
    selections.push_back(estimate_graph(x, q, rng, scheme, options));
  }
  return aggregate_signal_strengths(selections, p);
}

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test

enum class WilcoxonMethod { automatic, exact, normal };

struct ConnectivitySummary {
  std::size_t nonzero = 0;
  std::vector<std::size_t> histogram;  // 10 bins over (0, 1]
};

struct GroupComparison {
  double statistic = 0.0;  // min of the positive and negative rank sums
  double w_plus = 0.0;
  double z = 0.0;
  double p_value = 1.0;
  std::size_t effective_n = 0;
  bool exact = false;
  ConnectivitySummary first;
  ConnectivitySummary second;
};

inline constexpr std::size_t wilcoxon_min_pairs = 6;
inline constexpr std::size_t wilcoxon_exact_max = 12;

namespace detail {

inline double normal_upper_two_sided(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

inline ConnectivitySummary summarize(std::span<const double> v) {
  ConnectivitySummary s;
  s.histogram.assign(10, 0);
  for (double x : v) {
    if (x == 0.0) continue;
    ++s.nonzero;
    const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(std::ceil(std::abs(x) * 10.0)) - 1);
    ++s.histogram[bin];
  }
  return s;
}

}  // namespace detail

/// Paired signed-rank test on a - b. Zero differences are dropped; ties get
/// midranks. Two-sided p-value by exact enumeration of sign assignments when
/// at most 12 pairs remain, otherwise by the tie-corrected normal
/// approximation with continuity correction.
inline GroupComparison wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b,
                                            WilcoxonMethod method = WilcoxonMethod::automatic) {
  if (a.size() != b.size()) throw error(errc::dimension_mismatch, "paired samples differ in length");
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] - b[i] != 0.0) diff.push_back(a[i] - b[i]);
  const std::size_t n = diff.size();
  if (n < wilcoxon_min_pairs)
    throw error(errc::too_few_pairs, std::to_string(n) + " nonzero differences, need " +
                                         std::to_string(wilcoxon_min_pairs));

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return std::abs(diff[x]) < std::abs(diff[y]); });
  std::vector<double> rank(n);
  double tie_term = 0.0;
  for (std::size_t start = 0; start < n;) {
    std::size_t end = start;
    while (end + 1 < n && std::abs(diff[order[end + 1]]) == std::abs(diff[order[start]])) ++end;
    const double mid = 0.5 * static_cast<double>(start + end) + 1.0;
    for (std::size_t k = start; k <= end; ++k) rank[order[k]] = mid;
    const double t = static_cast<double>(end - start + 1);
    tie_term += t * t * t - t;
    start = end + 1;
  }

  GroupComparison out;
  out.effective_n = n;
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total += rank[i];
    if (diff[i] > 0.0) out.w_plus += rank[i];
  }
  out.statistic = std::min(out.w_plus, total - out.w_plus);

  const double dn = static_cast<double>(n);
  const double mean = dn * (dn + 1.0) / 4.0;
  const double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0 - tie_term / 48.0;
  const double dev = std::abs(out.w_plus - mean);
  out.z = var > 0.0 ? std::max(0.0, dev - 0.5) / std::sqrt(var) : 0.0;
  if (out.w_plus < mean) out.z = -out.z;

  const bool exact = method == WilcoxonMethod::exact ||
                     (method == WilcoxonMethod::automatic && n <= wilcoxon_exact_max);
  if (exact) {
    if (n > 30) throw error(errc::invalid_argument, "exact enumeration limited to 30 pairs");
    // Midranks are multiples of 1/2, so doubled rank sums are integers.
    std::vector<std::uint64_t> twice(n);
    std::uint64_t twice_total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      twice[i] = static_cast<std::uint64_t>(std::llround(2.0 * rank[i]));
      twice_total += twice[i];
    }
    std::vector<double> counts(twice_total + 1, 0.0);
    counts[0] = 1.0;
    for (std::uint64_t r : twice)
      for (std::uint64_t s = twice_total; s >= r; --s) {
        counts[s] += counts[s - r];
        if (s == r) break;
      }
    const auto observed = static_cast<std::uint64_t>(std::llround(2.0 * out.statistic));
    double extreme = 0.0;
    for (std::uint64_t s = 0; s <= twice_total; ++s)
      if (std::min(s, twice_total - s) <= observed) extreme += counts[s];
    out.p_value = std::min(1.0, extreme / std::ldexp(1.0, static_cast<int>(n)));
    out.exact = true;
  } else {
    out.p_value = std::clamp(detail::normal_upper_two_sided(out.z), 0.0, 1.0);
  }
  out.first = detail::summarize(a);
  out.second = detail::summarize(b);
  return out;
}

/// Upper-triangle entries in row-major order.
inline std::vector<double> upper_triangle(const SymmetricMatrix& m) {
  std::vector<double> out;
  for (std::size_t i = 0; i < m.dim(); ++i)
    for (std::size_t j = i + 1; j < m.dim(); ++j) out.push_back(m(i, j));
  return out;
}

/// Edge-by-edge comparison of two signal-strength matrices.
inline GroupComparison compare_groups(const SignalStrengthMatrix& first,
                                      const SignalStrengthMatrix& second) {
  if (first.dim() != second.dim())
    throw error(errc::dimension_mismatch, "signal-strength matrices differ in size");
  const auto a = upper_triangle(first.values);
  const auto b = upper_triangle(second.values);
  return wilcoxon_signed_rank(a, b);
}

}  // namespace ggmko
