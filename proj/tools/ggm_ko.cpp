// ggm_ko: command-line front end (estimate, simulate, benchmark, groups).

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "ggmko/commands.hpp"

namespace {

using namespace ggmko;

std::size_t resolve_threads(std::size_t flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("GGM_KO_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw error(errc::invalid_argument, "GGM_KO_THREADS must be a positive integer");
  }
  return 1;
}

std::vector<Method> resolve_methods(const std::vector<std::string>& names) {
  std::vector<Method> out;
  for (const auto& name : names) {
    const auto m = parse_method(name);
    if (!m) {
      std::string valid;
      for (Method v : all_methods) valid += (valid.empty() ? "" : ", ") + std::string(to_string(v));
      throw error(errc::invalid_argument, "unknown method '" + name + "' (valid: " + valid + ")");
    }
    out.push_back(*m);
  }
  return out;
}

struct SimulateFlags {
  std::string graph = "band";
  std::size_t p = 40;
  std::size_t n = 200;
  std::size_t bandwidth = 0;
  std::size_t block_size = 4;
  std::optional<double> strength;
  double kappa = 200.0;
  std::size_t replicates = 100;
  std::vector<double> q_grid = SimulationConfig{}.q_grid;
  std::uint64_t seed = 0;
  std::vector<std::string> methods;
  std::size_t grid_points = 50;
  std::size_t threads = 0;
  std::string out_dir;

  void attach(CLI::App* cmd) {
    cmd->add_option("--graph", graph, "Ground-truth graph family")
        ->check(CLI::IsMember({"band", "block"}))
        ->capture_default_str();
    cmd->add_option("--p", p, "Number of nodes")->capture_default_str();
    cmd->add_option("--n", n, "Samples per replicate")->capture_default_str();
    cmd->add_option("--bandwidth", bandwidth, "Band width (0: sparsity 1/25)")->capture_default_str();
    cmd->add_option("--block-size", block_size, "Block size for block graphs")->capture_default_str();
    cmd->add_option("--strength", strength, "Off-diagonal strength (default -0.4 band, 0.3 block)");
    cmd->add_option("--kappa", kappa, "Condition number of the band precision")->capture_default_str();
    cmd->add_option("--replicates", replicates, "Monte Carlo replicates")->capture_default_str();
    cmd->add_option("--q-grid", q_grid, "Target FDR levels")->delimiter(',');
    cmd->add_option("--seed", seed, "Top-level seed")->capture_default_str();
    cmd->add_option("--methods", methods, "Methods: ko, ko+, ct, pt, mb_and, mb_or")->delimiter(',');
    cmd->add_option("--grid-points", grid_points, "Baseline tuning grid size")->capture_default_str();
    cmd->add_option("--threads", threads, "Worker threads (fallback: GGM_KO_THREADS)");
    cmd->add_option("--out-dir", out_dir, "Fresh output directory")->required();
  }

  cli::SimulateCommand resolve(std::string name, std::vector<Method> default_methods) const {
    cli::SimulateCommand cmd;
    cmd.name = std::move(name);
    auto& c = cmd.config;
    c.kind = graph == "band" ? GraphKind::band : GraphKind::block;
    c.p = p;
    c.n = n;
    c.bandwidth = bandwidth;
    c.block_size = block_size;
    c.strength = strength;
    c.kappa = kappa;
    c.replicates = replicates;
    c.q_grid = q_grid;
    c.seed = seed;
    c.methods = methods.empty() ? std::move(default_methods) : resolve_methods(methods);
    c.grid_points = grid_points;
    cmd.threads = resolve_threads(threads);
    cmd.out_dir = out_dir;
    return cmd;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian graphical model edge selection with partial-correlation knockoffs"};
  app.set_config("--config", "", "Declarative config file (TOML/INI); flags win");
  app.set_version_flag("--version", std::string(ggmko::version));
  app.require_subcommand(1);

  cli::EstimateCommand est;
  std::string est_scheme = "ko";
  std::string est_input;
  std::string est_out;
  auto* estimate = app.add_subcommand("estimate", "Estimate the edge set of one data set");
  estimate->add_option("--input", est_input, "CSV with a header row of variable names")->required();
  estimate->add_option("--q", est.q, "Target FDR level")->capture_default_str();
  estimate->add_option("--scheme", est_scheme, "ko or ko+")->capture_default_str();
  estimate->add_option("--seed", est.seed, "Seed for the knockoff draws")->capture_default_str();
  estimate->add_flag("--center", est.center, "Subtract column means first");
  estimate->add_option("--group-column", est.group_column, "Label column to ignore")->capture_default_str();
  estimate->add_option("--out-dir", est_out, "Fresh output directory")->required();

  SimulateFlags sim;
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo FDR/power study for KO and KO+");
  sim.attach(simulate);

  SimulateFlags bench;
  auto* benchmark = app.add_subcommand("benchmark", "KO/KO+ against CT, PT and MB on shared data");
  bench.attach(benchmark);

  cli::GroupsCommand grp;
  std::string grp_scheme = "ko";
  std::string grp_input;
  std::string grp_out;
  auto* groups = app.add_subcommand("groups", "Two-group network comparison");
  groups->add_option("--input", grp_input, "Abundance CSV with a group column")->required();
  groups->add_option("--group-column", grp.group_column, "Group label column")->capture_default_str();
  groups->add_option("--q", grp.q, "Base target FDR level")->capture_default_str();
  groups->add_option("--subsamples", grp.subsamples, "Subsamples of the larger group")->capture_default_str();
  groups->add_option("--seed", grp.seed, "Top-level seed")->capture_default_str();
  groups->add_option("--pseudocount", grp.pseudocount, "Added before the log-ratio")->capture_default_str();
  groups->add_option("--min-prevalence", grp.min_prevalence, "Feature prevalence filter")->capture_default_str();
  groups->add_option("--scheme", grp_scheme, "ko or ko+")->capture_default_str();
  groups->add_flag("--center", grp.center, "Subtract column means before estimation");
  groups->add_option("--out-dir", grp_out, "Fresh output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? cli::success : cli::user_error;
  }

  try {
    if (*estimate) {
      est.scheme = parse_scheme(est_scheme);
      est.input = est_input;
      est.out_dir = est_out;
      return cli::run_estimate(est);
    }
    if (*simulate) return cli::run_simulate(sim.resolve("simulate", {Method::ko, Method::ko_plus}));
    if (*benchmark)
      return cli::run_simulate(bench.resolve(
          "benchmark", {all_methods, all_methods + std::size(all_methods)}));
    if (*groups) {
      grp.scheme = parse_scheme(grp_scheme);
      grp.input = grp_input;
      grp.out_dir = grp_out;
      return cli::run_groups(grp);
    }
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::user_error;
  }
  return cli::user_error;
}
