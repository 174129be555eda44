#include <gtest/gtest.h>

#include <cmath>

#include "ggmko/numeric.hpp"
#include "ggmko/random.hpp"

using namespace ggmko;

namespace {

SymmetricMatrix random_spd(std::size_t p, std::uint64_t seed) {
  RngStream rng(seed, 0);
  Matrix m(p, p);
  for (double& v : m.values()) v = rng.standard_normal();
  // M^T M + I
  SymmetricMatrix a(p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i; j < p; ++j) {
      double s = i == j ? 1.0 : 0.0;
      for (std::size_t k = 0; k < p; ++k) s += m(k, i) * m(k, j);
      a.set(i, j, s);
    }
  return a;
}

}  // namespace

TEST(Cholesky, IdentityFactorsToIdentity) {
  const auto l = cholesky(SymmetricMatrix::identity(3));
  EXPECT_EQ(l.lower(), Matrix::identity(3));
}

TEST(Cholesky, TwoByTwoClosedForm) {
  const auto l = cholesky(SymmetricMatrix::from_rows({{4, 2}, {2, 3}}));
  EXPECT_DOUBLE_EQ(l(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(l(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(l(1, 0), 1.0);
  EXPECT_NEAR(l(1, 1), std::sqrt(2.0), 1e-15);
}

TEST(Cholesky, ReconstructsRandomSpd) {
  const auto a = random_spd(8, 11);
  const auto l = cholesky(a);
  EXPECT_LE(max_abs_difference(l.reconstruct(), a), 1e-10 * a.max_abs());
  for (std::size_t i = 0; i < 8; ++i) EXPECT_GT(l(i, i), 0.0);
}

TEST(Cholesky, RejectsIndefiniteAndSingular) {
  try {
    cholesky(SymmetricMatrix::from_rows({{1, 2}, {2, 1}}));
    FAIL() << "expected NotPositiveDefinite";
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::not_positive_definite);
  }
  EXPECT_THROW(cholesky(SymmetricMatrix::from_rows({{1, 1}, {1, 1}})), error);
}

TEST(Cholesky, Deterministic) {
  const auto a = random_spd(10, 3);
  EXPECT_EQ(cholesky(a).lower(), cholesky(a).lower());
}

TEST(InvertSpd, ClosedForms) {
  EXPECT_EQ(invert_spd(SymmetricMatrix::identity(4)), SymmetricMatrix::identity(4));

  const double d[] = {2.0, 4.0};
  const auto inv = invert_spd(SymmetricMatrix::diagonal(d));
  EXPECT_DOUBLE_EQ(inv(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(inv(1, 1), 0.25);
  EXPECT_DOUBLE_EQ(inv(0, 1), 0.0);

  const auto inv2 = invert_spd(SymmetricMatrix::from_rows({{2, -1}, {-1, 2}}));
  EXPECT_NEAR(inv2(0, 0), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(inv2(0, 1), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(inv2(1, 1), 2.0 / 3.0, 1e-15);
}

TEST(InvertSpd, DoubleInverseRoundTrips) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_spd(1 + seed % 9, seed);
    const auto back = invert_spd(invert_spd(a));
    EXPECT_LE(max_abs_difference(back, a), 1e-8 * a.max_abs()) << "seed " << seed;
  }
}

TEST(InvertSpd, PropagatesNotPositiveDefinite) {
  try {
    invert_spd(SymmetricMatrix::from_rows({{1, 1}, {1, 1}}));
    FAIL();
  } catch (const error& e) {
    EXPECT_EQ(e.code(), errc::not_positive_definite);
  }
}

TEST(Eigenvalues, ClosedForms) {
  const double d[] = {3.0, 1.0, 2.0};
  const auto ev = symmetric_eigenvalues(SymmetricMatrix::diagonal(d));
  EXPECT_EQ(ev, (std::vector<double>{1.0, 2.0, 3.0}));

  const auto ev2 = symmetric_eigenvalues(SymmetricMatrix::from_rows({{2, -1}, {-1, 2}}));
  EXPECT_NEAR(ev2[0], 1.0, 1e-12);
  EXPECT_NEAR(ev2[1], 3.0, 1e-12);
}

TEST(Eigenvalues, ProductMatchesCholeskyDeterminant) {
  const auto a = random_spd(10, 5);
  const auto ev = symmetric_eigenvalues(a);
  double prod = 1.0;
  for (double v : ev) prod *= v;
  const double det = cholesky(a).determinant();
  EXPECT_NEAR(prod / det, 1.0, 1e-8);
}

TEST(Eigenvalues, SumMatchesTrace) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_spd(12, seed + 100);
    const auto ev = symmetric_eigenvalues(a);
    double sum = 0.0;
    for (double v : ev) sum += v;
    EXPECT_NEAR(sum / a.trace(), 1.0, 1e-10);
  }
}

TEST(Eigenvalues, VectorsDiagonalize) {
  const auto a = random_spd(6, 9);
  const auto eig = symmetric_eigen(a);
  for (std::size_t k = 0; k < 6; ++k)
    for (std::size_t i = 0; i < 6; ++i) {
      double av = 0.0;
      for (std::size_t j = 0; j < 6; ++j) av += a(i, j) * eig.vectors(j, k);
      EXPECT_NEAR(av, eig.values[k] * eig.vectors(i, k), 1e-9 * a.max_abs());
    }
}

TEST(Eigenvalues, ValuesOnlyAgreesWithJacobi) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = random_spd(3 + 7 * seed, seed + 300);
    const auto ql = symmetric_eigenvalues(a);
    const auto jac = symmetric_eigen(a).values;
    ASSERT_EQ(ql.size(), jac.size());
    for (std::size_t k = 0; k < ql.size(); ++k) EXPECT_NEAR(ql[k], jac[k], 1e-10 * a.max_abs());
  }
  // Repeated eigenvalues and an already diagonal input.
  SymmetricMatrix j(4, 2.0);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = r + 1; c < 4; ++c) j.set(r, c, 1.0);
  const auto ev = symmetric_eigenvalues(j);
  EXPECT_NEAR(ev[0], 1.0, 1e-12);
  EXPECT_NEAR(ev[2], 1.0, 1e-12);
  EXPECT_NEAR(ev[3], 5.0, 1e-12);
  EXPECT_EQ(symmetric_eigenvalues(SymmetricMatrix::diagonal(std::vector<double>{3.0})), std::vector<double>{3.0});
}

TEST(PseudoInverse, MatchesInverseOnFullRankAndAnnihilatesNullSpace) {
  const auto a = random_spd(5, 21);
  EXPECT_LE(max_abs_difference(pseudo_inverse_psd(a), invert_spd(a)), 1e-9);

  // Rank-1: v v^T with v = (1, 2) has pseudo-inverse v v^T / |v|^4.
  const auto r1 = SymmetricMatrix::from_rows({{1, 2}, {2, 4}});
  const auto pinv = pseudo_inverse_psd(r1);
  EXPECT_NEAR(pinv(0, 0), 1.0 / 25.0, 1e-12);
  EXPECT_NEAR(pinv(0, 1), 2.0 / 25.0, 1e-12);
  EXPECT_NEAR(pinv(1, 1), 4.0 / 25.0, 1e-12);
}

TEST(SymmetricMatrix, WritesAreMirrored) {
  SymmetricMatrix s(3);
  s.set(0, 2, 1.5);
  EXPECT_EQ(s(2, 0), 1.5);
  EXPECT_THROW(SymmetricMatrix::from_rows({{1, 2}, {3, 1}}), error);
}
