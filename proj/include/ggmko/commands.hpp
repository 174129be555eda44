#pragma once

// Implementations of the ggm_ko subcommands. Argument parsing lives in
// tools/ggm_ko.cpp; everything here takes resolved option structs so the
// commands can be driven from tests.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>
#include <unistd.h>

#include "json.hpp"

#include "ggmko/data.hpp"
#include "ggmko/error.hpp"
#include "ggmko/estimator.hpp"
#include "ggmko/group_pipeline.hpp"
#include "ggmko/simulation.hpp"
#include "ggmko/version.hpp"

namespace ggmko::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

enum exit_code : int { success = 0, user_error = 2, numerical_failure = 3 };

inline int exit_code_for(const error& e) {
  return is_numerical(e.code()) ? numerical_failure : user_error;
}

inline std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw error(errc::io_error, "cannot open '" + path.string() + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i)
    os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline json number_or_inf(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

/// Command, resolved configuration, seed, version, input digests, timestamps.
struct RunManifest {
  std::string command;
  json config = json::object();
  std::uint64_t seed = 0;
  std::vector<fs::path> inputs;
  std::string started_at = utc_timestamp();

  json to_json() const {
    json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["version"] = std::string(version);
    json in = json::array();
    for (const auto& p : inputs) in.push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    j["inputs"] = in;
    j["started_at"] = started_at;
    j["finished_at"] = utc_timestamp();
    return j;
  }
};

/// Files are written into a staging directory and moved into place on commit,
/// so a failed run leaves nothing behind. The target must be absent or empty.
class OutputDirectory {
 public:
  explicit OutputDirectory(fs::path target) : target_(std::move(target)) {
    if (target_.empty()) throw error(errc::invalid_argument, "--out-dir is required");
    if (fs::exists(target_) && !(fs::is_directory(target_) && fs::is_empty(target_)))
      throw error(errc::invalid_argument,
                  "output directory '" + target_.string() + "' exists and is not empty");
    staging_ = target_;
    staging_ += ".partial." + std::to_string(::getpid());
    fs::remove_all(staging_);
    fs::create_directories(staging_);
  }

  OutputDirectory(const OutputDirectory&) = delete;
  OutputDirectory& operator=(const OutputDirectory&) = delete;

  ~OutputDirectory() {
    if (!committed_) {
      std::error_code ec;
      fs::remove_all(staging_, ec);
    }
  }

  void write(const std::string& name, const std::string& contents) const {
    std::ofstream out(staging_ / name, std::ios::binary);
    out << contents;
    if (!out) throw error(errc::io_error, "failed writing '" + name + "'");
  }

  void commit() {
    if (fs::exists(target_)) fs::remove(target_);  // empty by construction
    if (target_.has_parent_path()) fs::create_directories(target_.parent_path());
    fs::rename(staging_, target_);
    committed_ = true;
  }

 private:
  fs::path target_;
  fs::path staging_;
  bool committed_ = false;
};

inline AbundanceTable read_table_file(const fs::path& path, const std::string& group_column) {
  std::ifstream in(path);
  if (!in) throw error(errc::io_error, "cannot open '" + path.string() + "'");
  return read_table_csv(in, group_column);
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateCommand {
  fs::path input;
  double q = 0.2;
  Scheme scheme = Scheme::ko;
  std::uint64_t seed = 0;
  bool center = false;
  std::string group_column = "__group__";
  fs::path out_dir;
};

inline std::string edges_to_tsv(const SelectionResult& sel, const TestMatrix& w,
                                const DataMatrix& x) {
  std::ostringstream os;
  os << "i\tj\tname_i\tname_j\tW\tR\n";
  for (const Edge& e : sel.selected)
    os << e.i + 1 << '\t' << e.j + 1 << '\t' << x.name(e.i) << '\t' << x.name(e.j) << '\t'
       << format_number(w(e.i, e.j)) << '\t' << format_number(sel.retained.at(e)) << '\n';
  return os.str();
}

inline int run_estimate(const EstimateCommand& cmd, std::ostream& log = std::clog) {
  RunManifest manifest;
  manifest.command = "estimate";
  manifest.seed = cmd.seed;
  manifest.inputs = {cmd.input};
  manifest.config = {{"input", cmd.input.string()}, {"q", cmd.q},
                     {"scheme", std::string(to_string(cmd.scheme))}, {"seed", cmd.seed},
                     {"center", cmd.center}, {"group_column", cmd.group_column}};

  const AbundanceTable table = read_table_file(cmd.input, cmd.group_column);
  DataMatrix x = to_data_matrix(table);
  x.require_finite();
  if (cmd.center) x = center_columns(x);
  if (!(cmd.q >= 0.0 && cmd.q <= 1.0)) throw error(errc::invalid_q, "q must lie in [0, 1]");

  const PartialCorrelationMatrix r = partial_correlations(x);
  RngStream rng(cmd.seed, 0);
  const KnockoffMatrix r0 = make_knockoffs(rng, x.n(), x.p());
  const TestMatrix w = build_test_matrix(r, r0);
  const SelectionResult sel = select_edges(w, cmd.q, cmd.scheme);

  json summary;
  summary["threshold"] = number_or_inf(sel.threshold);
  summary["q"] = cmd.q;
  summary["scheme"] = std::string(to_string(cmd.scheme));
  summary["n"] = x.n();
  summary["p"] = x.p();
  summary["n_selected"] = sel.selected.size();

  OutputDirectory out(cmd.out_dir);
  out.write("edges.tsv", edges_to_tsv(sel, w, x));
  out.write("selection.json", summary.dump(2) + "\n");
  out.write("manifest.json", manifest.to_json().dump(2) + "\n");
  out.commit();
  log << "estimate: " << sel.selected.size() << " edges, threshold "
      << format_number(sel.threshold) << '\n';
  return success;
}

// ---------------------------------------------------------------------------
// simulate / benchmark

struct SimulateCommand {
  std::string name = "simulate";
  SimulationConfig config;
  std::size_t threads = 1;
  fs::path out_dir;
};

inline json config_to_json(const SimulationConfig& c) {
  json j;
  j["graph"] = std::string(to_string(c.kind));
  j["p"] = c.p;
  j["n"] = c.n;
  if (c.kind == GraphKind::band) {
    j["bandwidth"] = c.resolved_bandwidth();
    j["kappa"] = c.kappa;
  } else {
    j["block_size"] = c.block_size;
  }
  j["strength"] = c.resolved_strength();
  j["replicates"] = c.replicates;
  j["q_grid"] = c.q_grid;
  j["seed"] = c.seed;
  json methods = json::array();
  for (Method m : c.methods) methods.push_back(std::string(to_string(m)));
  j["methods"] = methods;
  j["grid_points"] = c.grid_points;
  return j;
}

inline json metrics_to_json(const SimulationConfig& cfg, const MetricsRecord& record) {
  json j;
  j["model"] = {{"edges", record.edge_count},
                {"marginal_edges", record.marginal_edge_count},
                {"pairs", pair_count(cfg.p)},
                {"condition_number_unscaled", record.condition_number_unscaled},
                {"condition_number_rescaled", record.condition_number_rescaled}};
  json curves = json::array();
  for (const auto& a : record.aggregates)
    curves.push_back({{"method", std::string(to_string(a.method))},
                      {"q_or_lambda", a.tuning},
                      {"fdr", a.fdr},
                      {"fdr_se", a.fdr_se},
                      {"power", a.power},
                      {"power_se", a.power_se},
                      {"mean_selected", a.mean_selected}});
  j["curves"] = curves;
  json target = json::array();
  for (const auto& a : record.aggregates) {
    if (a.method != Method::ko && a.method != Method::ko_plus) continue;
    const auto ratios = modified_fdr_ratios(record, a.tuning, a.method);
    const MeanSe mod = mean_and_se(ratios);
    target.push_back({{"method", std::string(to_string(a.method))},
                      {"target_q", a.tuning},
                      {"actual_fdr", a.fdr},
                      {"actual_fdr_se", a.fdr_se},
                      {"modified_fdr", mod.mean},
                      {"modified_fdr_se", mod.se},
                      {"power", a.power}});
  }
  j["target_vs_actual"] = target;
  return j;
}

inline int run_simulate(const SimulateCommand& cmd, std::ostream& log = std::clog) {
  RunManifest manifest;
  manifest.command = cmd.name;
  manifest.seed = cmd.config.seed;
  cmd.config.validate();
  manifest.config = config_to_json(cmd.config);

  OutputDirectory out(cmd.out_dir);
  const MetricsRecord record = run_monte_carlo(cmd.config, cmd.threads);
  out.write("replicates.csv", rows_to_csv(record));
  out.write("curves.csv", aggregates_to_csv(record));
  out.write("metrics.json", metrics_to_json(cmd.config, record).dump(2) + "\n");
  out.write("manifest.json", manifest.to_json().dump(2) + "\n");
  out.commit();
  log << cmd.name << ": " << cmd.config.replicates << " replicates, " << record.rows.size()
      << " rows written to " << cmd.out_dir.string() << '\n';
  return success;
}

// ---------------------------------------------------------------------------
// groups

struct GroupsCommand {
  fs::path input;
  std::string group_column = "__group__";
  double q = 0.2;
  std::size_t subsamples = 10;
  std::uint64_t seed = 0;
  double pseudocount = 0.5;
  double min_prevalence = 0.0;
  bool center = false;
  Scheme scheme = Scheme::ko;
  fs::path out_dir;
};

inline std::string signal_to_csv(const SignalStrengthMatrix& s, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "feature";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t i = 0; i < s.dim(); ++i) {
    os << names[i];
    for (std::size_t j = 0; j < s.dim(); ++j) os << ',' << format_number(s.values(i, j));
    os << '\n';
  }
  return os.str();
}

inline std::string file_label(const std::string& label) {
  std::string out;
  for (char c : label)
    out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
  return out.empty() ? "group" : out;
}

struct GroupsResult {
  std::vector<std::string> labels;
  std::vector<SignalStrengthMatrix> signals;
  GroupComparison comparison;
  bool subsampled = false;
  std::string subsampled_group;
  bool testable = true;  // false when fewer than six edges differ
};

/// The larger group is subsampled to the smaller group's size `subsamples`
/// times and analyzed with the multiple-FDR scheme; the smaller group gets a
/// single run at q. Equal sizes: both groups get a single run.
inline GroupsResult analyze_groups(const AbundanceTable& raw, const GroupsCommand& cmd,
                                   std::ostream& log) {
  const auto labels = raw.group_labels();
  if (raw.groups.empty())
    throw error(errc::invalid_argument, "no group column '" + cmd.group_column + "' in input");
  if (labels.size() != 2)
    throw error(errc::invalid_argument,
                "expected exactly two groups, found " + std::to_string(labels.size()));
  if (cmd.subsamples == 0) throw error(errc::invalid_argument, "subsamples must be positive");
  raw.validate();
  const AbundanceTable table = prevalence_filter(raw, cmd.min_prevalence);

  const EstimateOptions options{cmd.center, Inversion::pseudo_inverse};
  std::vector<AbundanceTable> parts = {table.group(labels[0]), table.group(labels[1])};
  const std::size_t small = parts[0].n() <= parts[1].n() ? 0 : 1;
  const std::size_t large = 1 - small;
  const std::size_t p = table.p();

  GroupsResult result;
  result.labels = labels;
  result.signals.resize(2);
  RngStream subsample_rng(cmd.seed, 0);
  RngStream large_rng(cmd.seed, 1);
  RngStream small_rng(cmd.seed, 2);

  auto vanilla = [&](const AbundanceTable& t, RngStream& rng) {
    const SelectionResult sel = estimate_graph(clr_transform(t, cmd.pseudocount), cmd.q, rng,
                                               cmd.scheme, options);
    return aggregate_signal_strengths({sel}, p);
  };

  if (parts[0].n() == parts[1].n()) {
    log << "groups: equal group sizes (" << parts[0].n() << "), no subsampling\n";
    result.signals[0] = vanilla(parts[0], large_rng);
    result.signals[1] = vanilla(parts[1], small_rng);
  } else {
    result.subsampled = true;
    result.subsampled_group = labels[large];
    log << "groups: subsampling '" << labels[large] << "' (" << parts[large].n() << " rows) to "
        << parts[small].n() << " rows, " << cmd.subsamples << " times\n";
    std::vector<DataMatrix> runs;
    for (std::size_t k = 0; k < cmd.subsamples; ++k)
      runs.push_back(clr_transform(subsample_rows(subsample_rng, parts[large], parts[small].n()),
                                   cmd.pseudocount));
    result.signals[large] = multi_fdr_aggregate(runs, cmd.q, large_rng, cmd.scheme, options);
    result.signals[small] = vanilla(parts[small], small_rng);
  }
  try {
    result.comparison = compare_groups(result.signals[0], result.signals[1]);
  } catch (const error& e) {
    if (e.code() != errc::too_few_pairs) throw;
    // Nearly identical networks: nothing to test, report p = 1.
    log << "groups: " << e.what() << "; reporting p = 1\n";
    result.testable = false;
    const auto a = upper_triangle(result.signals[0].values);
    const auto b = upper_triangle(result.signals[1].values);
    result.comparison = GroupComparison{};
    result.comparison.first = detail::summarize(a);
    result.comparison.second = detail::summarize(b);
    for (std::size_t k = 0; k < a.size(); ++k) result.comparison.effective_n += a[k] != b[k];
  }
  return result;
}

inline json summary_to_json(const ConnectivitySummary& s) {
  return {{"nonzero", s.nonzero}, {"histogram", s.histogram}};
}

inline int run_groups(const GroupsCommand& cmd, std::ostream& log = std::clog) {
  RunManifest manifest;
  manifest.command = "groups";
  manifest.seed = cmd.seed;
  manifest.inputs = {cmd.input};
  manifest.config = {{"input", cmd.input.string()},      {"group_column", cmd.group_column},
                     {"q", cmd.q},                       {"subsamples", cmd.subsamples},
                     {"seed", cmd.seed},                 {"pseudocount", cmd.pseudocount},
                     {"min_prevalence", cmd.min_prevalence}, {"center", cmd.center},
                     {"scheme", std::string(to_string(cmd.scheme))}};

  const AbundanceTable raw = read_table_file(cmd.input, cmd.group_column);
  const GroupsResult res = analyze_groups(raw, cmd, log);
  const AbundanceTable filtered = prevalence_filter(raw, cmd.min_prevalence);

  json j;
  j["features"] = filtered.feature_names;
  j["subsampled"] = res.subsampled;
  if (res.subsampled) j["subsampled_group"] = res.subsampled_group;
  json groups = json::array();
  for (std::size_t g = 0; g < 2; ++g) {
    json thresholds = json::array();
    for (double t : res.signals[g].thresholds) thresholds.push_back(number_or_inf(t));
    groups.push_back({{"label", res.labels[g]},
                      {"file", "signal_" + file_label(res.labels[g]) + ".csv"},
                      {"targets", res.signals[g].targets},
                      {"thresholds", thresholds},
                      {"all_zero", res.signals[g].all_zero}});
  }
  j["groups"] = groups;
  const auto& c = res.comparison;
  j["comparison"] = {{"test", "wilcoxon_signed_rank"},
                     {"pairs", "upper-triangle signal strengths, first group minus second"},
                     {"testable", res.testable},
                     {"statistic", c.statistic},
                     {"w_plus", c.w_plus},
                     {"z", c.z},
                     {"p_value", c.p_value},
                     {"effective_n", c.effective_n},
                     {"exact", c.exact},
                     {"first", summary_to_json(c.first)},
                     {"second", summary_to_json(c.second)}};

  OutputDirectory out(cmd.out_dir);
  for (std::size_t g = 0; g < 2; ++g)
    out.write("signal_" + file_label(res.labels[g]) + ".csv",
              signal_to_csv(res.signals[g], filtered.feature_names));
  out.write("comparison.json", j.dump(2) + "\n");
  out.write("manifest.json", manifest.to_json().dump(2) + "\n");
  out.commit();
  log << "groups: Wilcoxon p = " << format_number(c.p_value) << '\n';
  return success;
}

}  // namespace ggmko::cli
