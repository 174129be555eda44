#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "ggmko/estimator.hpp"
#include "ggmko/simulation.hpp"
#include "oracles.hpp"

using namespace ggmko;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

DataMatrix null_data(std::size_t n, std::size_t p, std::uint64_t seed) {
  RngStream rng(seed, 0);
  return sample_mvn(rng, SymmetricMatrix::identity(p), n);
}

TestMatrix example_w() { return oracle::test_matrix_from_upper(3, {3.0, 2.0, -1.0}); }

// {3, 2, -1, 0.5} needs four upper-triangle slots; p=4 has six, the rest are 0.
TestMatrix four_values() { return oracle::test_matrix_from_upper(4, {3.0, 2.0, -1.0, 0.5}); }

}  // namespace

TEST(PartialCorrelations, TwoColumnsEqualSampleCorrelation) {
  const auto x = null_data(40, 2, 1);
  const auto r = partial_correlations(x);
  EXPECT_NEAR(r(0, 1), oracle::correlation(x, 0, 1), 1e-10);
  EXPECT_EQ(r(0, 0), 1.0);
}

TEST(PartialCorrelations, OrthogonalColumnsGiveIdentity) {
  Matrix m(4, 2);
  m(0, 0) = 1;
  m(1, 0) = 1;
  m(2, 1) = 1;
  m(3, 1) = -1;
  const auto r = partial_correlations(DataMatrix(m));
  EXPECT_EQ(r(0, 1), 0.0);
}

TEST(PartialCorrelations, MatchesResidualRegressionOracle) {
  RngStream rng(2, 0);
  const auto x = sample_mvn(rng, SymmetricMatrix::from_rows({{1, 0.5, 0.2}, {0.5, 1, 0.4}, {0.2, 0.4, 1}}), 50);
  const auto r = partial_correlations(x);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = i + 1; j < 3; ++j)
      EXPECT_NEAR(r(i, j), oracle::residual_partial_correlation(x, i, j), 1e-8);
}

TEST(PartialCorrelations, LargerInstanceMatchesOracle) {
  const auto x = null_data(60, 7, 3);
  const auto r = partial_correlations(x);
  for (std::size_t i = 0; i < 7; ++i)
    for (std::size_t j = i + 1; j < 7; ++j) {
      EXPECT_NEAR(r(i, j), oracle::residual_partial_correlation(x, i, j), 1e-8);
      EXPECT_LT(std::abs(r(i, j)), 1.0);
    }
}

TEST(PartialCorrelations, Errors) {
  try {
    partial_correlations(null_data(5, 5, 1));
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::sample_size_too_small);
  }
  Matrix m(10, 2);
  for (std::size_t r = 0; r < 10; ++r) m(r, 0) = static_cast<double>(r);
  try {
    partial_correlations(DataMatrix(m));
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::degenerate_column);
  }
}

TEST(PartialCorrelations, ScaleInvariant) {
  auto x = null_data(80, 6, 4);
  const auto r = partial_correlations(x);
  for (std::size_t row = 0; row < x.n(); ++row) {
    x.values(row, 2) *= 37.5;
    x.values(row, 4) *= 1e-3;
  }
  const auto r2 = partial_correlations(x);
  EXPECT_LE(max_abs_difference(r.values, r2.values), 1e-10);

  RngStream a(9, 1);
  RngStream b(9, 1);
  const auto s1 = estimate_graph(null_data(80, 6, 4), 0.3, a, Scheme::ko);
  const auto s2 = estimate_graph(x, 0.3, b, Scheme::ko);
  EXPECT_EQ(s1.selected, s2.selected);
}

TEST(PrecisionToPartial, ClosedForms) {
  EXPECT_DOUBLE_EQ(precision_to_partial(SymmetricMatrix::from_rows({{2, -1}, {-1, 2}}))(0, 1), 0.5);
  const auto rho = precision_to_partial(
      SymmetricMatrix::from_rows({{2, -1, 0}, {-1, 2, -1}, {0, -1, 2}}));
  EXPECT_EQ(rho(0, 2), 0.0);
  EXPECT_DOUBLE_EQ(rho(0, 1), 0.5);
  EXPECT_DOUBLE_EQ(rho(1, 2), 0.5);
  EXPECT_EQ(precision_to_partial(SymmetricMatrix::identity(3)).values, SymmetricMatrix::identity(3));
  EXPECT_THROW(precision_to_partial(SymmetricMatrix::from_rows({{1, 2}, {2, 1}})), error);
}

TEST(NullPivot, Values) {
  EXPECT_EQ(null_t_statistic(0.0, 20, 8), 0.0);
  EXPECT_NEAR(null_t_statistic(0.5, 20, 8), 2.0, 1e-14);
  RngStream rng(5, 0);
  for (int k = 0; k < 100; ++k) {
    const double r = 2.0 * rng.uniform() - 1.0;
    EXPECT_EQ(null_t_statistic(-r, 50, 10), -null_t_statistic(r, 50, 10));
  }
}

TEST(Knockoffs, EntryTransform) {
  EXPECT_EQ(knockoff_entry(0.0, 10), 0.0);
  EXPECT_NEAR(knockoff_entry(10.0, 100), 0.70711, 1e-5);
}

TEST(Knockoffs, MatrixShape) {
  RngStream rng(6, 0);
  const auto k = make_knockoffs(rng, 30, 5);
  EXPECT_EQ(k.dof, 25);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(k(i, i), 1.0);
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_EQ(k(i, j), k(j, i));
      if (i != j) {
        EXPECT_LT(std::abs(k(i, j)), 1.0);
      }
    }
  }
  EXPECT_THROW(make_knockoffs(rng, 5, 5), error);
}

TEST(Knockoffs, MatchNullPartialCorrelationLaw) {
  // n=30, p=5: null sample partial correlations at pair (0, 1) vs knockoff entries.
  const std::size_t n = 30;
  const std::size_t p = 5;
  const std::size_t reps = 10000;
  std::vector<double> sample;
  std::vector<double> knock;
  RngStream data(77, 0);
  RngStream ko(77, 1);
  for (std::size_t r = 0; r < reps; ++r) {
    sample.push_back(partial_correlations(sample_mvn(data, SymmetricMatrix::identity(p), n))(0, 1));
    knock.push_back(knockoff_entry(student_t(ko, static_cast<long>(n - p)), static_cast<long>(n - p)));
  }
  EXPECT_LT(ks_two_sample(sample, knock), ks_critical_value_two_sample(reps, reps, 0.001));
}

TEST(EntryStatistics, Magnitudes) {
  const auto t = entry_statistics(SymmetricMatrix::from_rows({{1, 0.3, -0.8}, {0.3, 1, 0}, {-0.8, 0, 1}}));
  EXPECT_EQ(t(0, 1), 0.3);
  EXPECT_EQ(t(0, 2), 0.8);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(t(i, i), 0.0);
}

TEST(TestMatrixBuild, SignedMaximum) {
  EXPECT_EQ(signed_max(0.3, 0.1), 0.3);
  EXPECT_EQ(signed_max(0.1, 0.3), -0.3);
  EXPECT_EQ(signed_max(0.2, 0.2), 0.0);
  EXPECT_THROW(test_matrix(EntryStatistics{SymmetricMatrix(2)}, EntryStatistics{SymmetricMatrix(3)}),
               error);
}

TEST(Threshold, KoExamples) {
  const auto w = four_values();
  const auto a = ko_threshold(w, 0.5);
  EXPECT_EQ(a.threshold, 0.5);
  EXPECT_EQ(a.selected.size(), 3u);
  const auto b = ko_threshold(w, 0.2);
  EXPECT_EQ(b.threshold, 2.0);
  EXPECT_EQ(b.selected.size(), 2u);
}

TEST(Threshold, KoPlusExamples) {
  const auto w = four_values();
  EXPECT_EQ(ko_plus_threshold(w, 0.5).threshold, 2.0);
  const auto b = ko_plus_threshold(w, 0.2);
  EXPECT_EQ(b.threshold, inf);
  EXPECT_TRUE(b.selected.empty());
  EXPECT_TRUE(ko_plus_threshold(example_w(), 1.0).finite());
}

TEST(Threshold, AllNegativeNeverSelects) {
  const auto w = oracle::test_matrix_from_upper(3, {-0.4, -0.2, -0.9});
  for (double q : {0.0, 0.3, 0.99}) {
    EXPECT_EQ(ko_threshold(w, q).threshold, inf);
    EXPECT_EQ(ko_plus_threshold(w, q).threshold, inf);
  }
  // At q = 1 the ratio 1/(0 v 1) is feasible above the largest magnitude; nothing is selected.
  const auto one = ko_threshold(w, 1.0);
  EXPECT_EQ(one.threshold, 0.9);
  EXPECT_TRUE(one.selected.empty());
  EXPECT_EQ(ko_plus_threshold(w, 1.0).threshold, inf);
}

TEST(Threshold, ZeroTargetLevel) {
  // KO+ can never reach ratio 0; KO reaches it above the largest negative magnitude.
  const auto w = four_values();
  EXPECT_EQ(ko_plus_threshold(w, 0.0).threshold, inf);
  EXPECT_EQ(ko_threshold(w, 0.0).threshold, 2.0);
  EXPECT_EQ(ko_threshold(oracle::test_matrix_from_upper(3, {0.5, -0.9, 0.1}), 0.0).threshold, inf);
}

TEST(Threshold, RejectsInvalidQ) {
  const auto w = example_w();
  for (double q : {-0.1, 1.5, std::nan("")}) {
    try {
      ko_threshold(w, q);
      FAIL();
    } catch (const error& e) {
      EXPECT_EQ(e.code(), errc::invalid_q);
    }
  }
}

TEST(Threshold, SelectedEntriesClearThresholdAndCarryR) {
  const auto x = null_data(100, 8, 12);
  RngStream rng(12, 1);
  const auto r = partial_correlations(x);
  const auto w = build_test_matrix(r, make_knockoffs(rng, 100, 8));
  const auto sel = ko_threshold(w, 1.0);
  for (const auto& e : sel.selected) {
    EXPECT_GE(w(e.i, e.j), sel.threshold);
    EXPECT_EQ(sel.retained.at(e), r(e.i, e.j));
  }
}

TEST(Threshold, AgreesWithBruteForce) {
  RngStream rng(13, 0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> upper(15);
    for (double& v : upper) {
      // Coarse values produce ties and zeros.
      v = std::round((rng.uniform() * 2.0 - 0.8) * 8.0) / 8.0;
    }
    const auto w = oracle::test_matrix_from_upper(6, upper);
    for (double q : {0.0, 0.1, 0.25, 0.5, 1.0}) {
      EXPECT_EQ(ko_threshold(w, q).threshold, oracle::brute_force_threshold(upper, q, false));
      EXPECT_EQ(ko_plus_threshold(w, q).threshold, oracle::brute_force_threshold(upper, q, true));
    }
  }
}

TEST(Swap, EmptyAndFullSets) {
  const auto x = null_data(40, 4, 14);
  RngStream rng(14, 1);
  const auto r = partial_correlations(x);
  const auto r0 = make_knockoffs(rng, 40, 4);
  const auto [a, b] = swap_entries(r, r0, {});
  EXPECT_EQ(a.values, r.values);
  EXPECT_EQ(b.values, r0.values);
  const auto [c, d] = swap_entries(r, r0, complete_graph(4));
  EXPECT_EQ(c.values, r0.values);
  EXPECT_EQ(d.values, r.values);
}

TEST(Swap, SinglePairMovesOnlyThatPair) {
  const auto x = null_data(40, 4, 15);
  RngStream rng(15, 1);
  const auto r = partial_correlations(x);
  const auto r0 = make_knockoffs(rng, 40, 4);
  const auto [a, b] = swap_entries(r, r0, {Edge(0, 1)});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      const bool moved = (i == 0 && j == 1) || (i == 1 && j == 0);
      EXPECT_EQ(a(i, j), moved ? r0(i, j) : r(i, j));
      EXPECT_EQ(b(i, j), moved ? r(i, j) : r0(i, j));
    }
}

TEST(Swap, RejectsDiagonal) {
  const PartialCorrelationMatrix r{SymmetricMatrix::identity(3)};
  const KnockoffMatrix r0{SymmetricMatrix::identity(3), 10};
  EdgeSet s;
  s.insert(Edge(1, 1));
  try {
    swap_entries(r, r0, s);
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::diagonal_in_swap_set);
  }
}

TEST(Properties, AntisymmetryUnderSwaps) {
  RngStream rng(16, 0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t p = 3 + rng.uniform_index(6);
    const std::size_t n = p + 5 + rng.uniform_index(40);
    const auto r = partial_correlations(sample_mvn(rng, SymmetricMatrix::identity(p), n));
    const auto r0 = make_knockoffs(rng, n, p);
    EdgeSet s;
    for (const auto& e : complete_graph(p))
      if (rng.uniform() < 0.5) s.insert(e);
    const auto w = build_test_matrix(r, r0);
    const auto [rs, r0s] = swap_entries(r, r0, s);
    const auto ws = build_test_matrix(rs, r0s);
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = i + 1; j < p; ++j)
        ASSERT_EQ(ws(i, j), s.contains(Edge(i, j)) ? -w(i, j) : w(i, j));
  }
}

TEST(Properties, MonotoneInQAndKoPlusNested) {
  RngStream rng(17, 0);
  const std::vector<double> qs = {0.0, 0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0};
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> upper(45);
    for (double& v : upper) v = rng.standard_normal() + 0.7;
    const auto w = oracle::test_matrix_from_upper(10, upper);
    for (Scheme scheme : {Scheme::ko, Scheme::ko_plus})
      for (std::size_t k = 1; k < qs.size(); ++k)
        ASSERT_TRUE(is_subset(select_edges(w, qs[k - 1], scheme).selected,
                              select_edges(w, qs[k], scheme).selected));
    for (double q : qs) {
      const auto ko = ko_threshold(w, q);
      const auto kp = ko_plus_threshold(w, q);
      ASSERT_GE(kp.threshold, ko.threshold);
      ASSERT_TRUE(is_subset(kp.selected, ko.selected));
    }
  }
}

TEST(EstimateGraph, DeterministicGivenSeed) {
  const auto x = null_data(60, 6, 18);
  RngStream a(3, 4);
  RngStream b(3, 4);
  const auto s1 = estimate_graph(x, 0.4, a, Scheme::ko);
  const auto s2 = estimate_graph(x, 0.4, b, Scheme::ko);
  EXPECT_EQ(s1.selected, s2.selected);
  EXPECT_EQ(s1.threshold, s2.threshold);
}

TEST(EstimateGraph, GlobalNullRarelySelects) {
  // Under the null every selection is false: KO+ should almost never select,
  // KO only controls |S| / (|S| + 1/q).
  std::size_t any_plus = 0;
  std::vector<double> modified;
  for (std::size_t rep = 0; rep < 100; ++rep) {
    RngStream data(19, 2 * rep);
    const auto x = sample_mvn(data, SymmetricMatrix::identity(20), 200);
    RngStream ko(19, 2 * rep + 1);
    any_plus += !estimate_graph(x, 0.1, ko, Scheme::ko_plus).selected.empty();
    RngStream ko2(19, 2 * rep + 1);
    const double s = static_cast<double>(estimate_graph(x, 0.1, ko2, Scheme::ko).selected.size());
    modified.push_back(s / (s + 10.0));
  }
  EXPECT_LE(any_plus, 5u);
  double mean = 0.0;
  for (double v : modified) mean += v / 100.0;
  double var = 0.0;
  for (double v : modified) var += (v - mean) * (v - mean) / 99.0;
  EXPECT_LE(mean, 0.1 + 2.0 * std::sqrt(var / 100.0));
}

TEST(EstimateGraph, StrongBlocksHavePower) {
  const auto model = block_graph(40, 4, 0.5);
  double total = 0.0;
  for (std::size_t rep = 0; rep < 20; ++rep) {
    RngStream data(20, 2 * rep);
    RngStream ko(20, 2 * rep + 1);
    const auto x = sample_mvn(data, model.covariance, 400);
    total += power(estimate_graph(x, 0.2, ko, Scheme::ko).selected, model.edges);
  }
  EXPECT_GE(total / 20.0, 0.5);
}

TEST(EstimateGraph, StrongPairSelected) {
  std::size_t hits = 0;
  for (std::size_t rep = 0; rep < 100; ++rep) {
    RngStream data(21, 2 * rep);
    RngStream ko(21, 2 * rep + 1);
    Matrix m(50, 2);
    for (std::size_t r = 0; r < 50; ++r) {
      m(r, 0) = data.standard_normal();
      m(r, 1) = m(r, 0) + 0.3 * data.standard_normal();
    }
    hits += estimate_graph(DataMatrix(m), 0.2, ko, Scheme::ko).selected.contains(Edge(0, 1));
  }
  EXPECT_GE(hits, 95u);
}

TEST(EstimateGraph, SignFlipAndExchangeabilityUnderNull) {
  const std::size_t reps = 2000;
  std::size_t positive = 0;
  std::size_t nonzero = 0;
  std::vector<double> t;
  std::vector<double> t0;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    RngStream data(22, 2 * rep);
    RngStream ko(22, 2 * rep + 1);
    const auto r = partial_correlations(sample_mvn(data, SymmetricMatrix::identity(8), 40));
    const auto w = build_test_matrix(r, make_knockoffs(ko, 40, 8));
    const double v = w(2, 5);
    nonzero += v != 0.0;
    positive += v > 0.0;
    t.push_back(w.sample(2, 5));
    t0.push_back(w.knockoff(2, 5));
  }
  const double frac = static_cast<double>(positive) / static_cast<double>(nonzero);
  EXPECT_NEAR(frac, 0.5, 4.0 * std::sqrt(0.25 / static_cast<double>(nonzero)));
  EXPECT_LT(ks_two_sample(t, t0), ks_critical_value_two_sample(reps, reps, 0.001));
}
