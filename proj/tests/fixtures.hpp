#pragma once

// Synthetic data sets shared by the pipeline and command-line tests.

#include <cmath>
#include <sstream>
#include <string>

#include "ggmko/group_pipeline.hpp"
#include "ggmko/random.hpp"
#include "ggmko/simulation.hpp"

namespace fixture {

/// Log-normal abundances exp(z) with z ~ N(0, sigma), scaled to counts-like magnitudes.
inline ggmko::AbundanceTable lognormal_table(ggmko::RngStream& rng, const ggmko::SymmetricMatrix& sigma,
                                             std::size_t n, const std::string& label) {
  const auto z = ggmko::sample_mvn(rng, sigma, n);
  ggmko::AbundanceTable t;
  t.values = ggmko::Matrix(n, sigma.dim());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < sigma.dim(); ++j) t.values(i, j) = 100.0 * std::exp(z.values(i, j));
  for (std::size_t j = 0; j < sigma.dim(); ++j) t.feature_names.push_back("F" + std::to_string(j + 1));
  t.groups.assign(n, label);
  return t;
}

inline ggmko::AbundanceTable concat(const ggmko::AbundanceTable& a, const ggmko::AbundanceTable& b) {
  ggmko::AbundanceTable out;
  out.feature_names = a.feature_names;
  out.values = ggmko::Matrix(a.n() + b.n(), a.p());
  for (std::size_t i = 0; i < a.n(); ++i)
    for (std::size_t j = 0; j < a.p(); ++j) out.values(i, j) = a.values(i, j);
  for (std::size_t i = 0; i < b.n(); ++i)
    for (std::size_t j = 0; j < b.p(); ++j) out.values(a.n() + i, j) = b.values(i, j);
  out.groups = a.groups;
  out.groups.insert(out.groups.end(), b.groups.begin(), b.groups.end());
  return out;
}

/// Group "A" has strong 4-blocks, group "B" is independent; A is the larger group.
inline ggmko::AbundanceTable two_block_groups(std::uint64_t seed, std::size_t p = 12,
                                              std::size_t n_a = 150, std::size_t n_b = 100) {
  ggmko::RngStream rng(seed, 0);
  const auto a = lognormal_table(rng, ggmko::block_graph(p, 4, 0.6).covariance, n_a, "A");
  const auto b = lognormal_table(rng, ggmko::SymmetricMatrix::identity(p), n_b, "B");
  return concat(a, b);
}

inline std::string to_csv(const ggmko::AbundanceTable& t, bool with_groups = true) {
  std::ostringstream os;
  os.precision(17);
  if (with_groups) os << "__group__,";
  for (std::size_t j = 0; j < t.p(); ++j) os << (j ? "," : "") << t.feature_names[j];
  os << '\n';
  for (std::size_t i = 0; i < t.n(); ++i) {
    if (with_groups) os << t.groups[i] << ',';
    for (std::size_t j = 0; j < t.p(); ++j) os << (j ? "," : "") << t.values(i, j);
    os << '\n';
  }
  return os.str();
}

}  // namespace fixture
