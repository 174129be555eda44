#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "ggmko/error.hpp"

namespace ggmko {

/// Every numerical tolerance used by the library; tests read the same values.
struct tolerances {
  static constexpr double cholesky_pivot = 1e-12;   // relative to max diagonal
  static constexpr double jacobi_offdiag = 1e-12;   // relative to Frobenius norm
  static constexpr int jacobi_max_sweeps = 100;
  static constexpr double pseudo_inverse_rank = 1e-10;  // relative to max eigenvalue
  static constexpr double lasso_coef_change = 1e-8;
  static constexpr int lasso_max_sweeps = 10000;
  static constexpr double marginal_zero = 1e-12;
  static constexpr double block_zero = 1e-10;
  static constexpr double condition_number_rel = 1e-9;  // band-graph shift solve
};

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t dim) {
    Matrix m(dim, dim);
    for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows_);
    for (std::size_t i = 0; i < rows_; ++i) out[i] = (*this)(i, j);
    return out;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Square matrix that stays exactly symmetric: every write is mirrored.
class SymmetricMatrix {
 public:
  SymmetricMatrix() = default;
  explicit SymmetricMatrix(std::size_t dim, double diagonal = 0.0) : full_(dim, dim) {
    for (std::size_t i = 0; i < dim; ++i) full_(i, i) = diagonal;
  }

  static SymmetricMatrix identity(std::size_t dim) { return SymmetricMatrix(dim, 1.0); }

  /// Builds from a square matrix, averaging the two triangles.
  static SymmetricMatrix from_average(const Matrix& m) {
    if (m.rows() != m.cols())
      throw error(errc::dimension_mismatch, "symmetric matrix needs a square input");
    SymmetricMatrix s(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) {
      s.full_(i, i) = m(i, i);
      for (std::size_t j = i + 1; j < m.cols(); ++j) s.set(i, j, 0.5 * (m(i, j) + m(j, i)));
    }
    return s;
  }

  /// Builds from nested rows; the lower triangle is taken as given and must match.
  static SymmetricMatrix from_rows(const std::vector<std::vector<double>>& rows) {
    Matrix m(rows.size(), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.size())
        throw error(errc::dimension_mismatch, "symmetric matrix needs square rows");
      for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (m(i, j) != m(j, i)) throw error(errc::invalid_argument, "input is not symmetric");
    return from_average(m);
  }

  static SymmetricMatrix diagonal(std::span<const double> d) {
    SymmetricMatrix s(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) s.full_(i, i) = d[i];
    return s;
  }

  std::size_t dim() const noexcept { return full_.rows(); }
  double operator()(std::size_t i, std::size_t j) const { return full_(i, j); }

  void set(std::size_t i, std::size_t j, double v) {
    full_(i, j) = v;
    full_(j, i) = v;
  }

  const Matrix& full() const noexcept { return full_; }

  double max_abs() const {
    double m = 0.0;
    for (double v : full_.values()) m = std::max(m, std::abs(v));
    return m;
  }

  double trace() const {
    double t = 0.0;
    for (std::size_t i = 0; i < dim(); ++i) t += full_(i, i);
    return t;
  }

  double frobenius() const {
    double s = 0.0;
    for (double v : full_.values()) s += v * v;
    return std::sqrt(s);
  }

  friend bool operator==(const SymmetricMatrix&, const SymmetricMatrix&) = default;

 private:
  Matrix full_;
};

/// Lower-triangular factor L with L * L^T equal to the factored matrix.
class CholeskyFactor {
 public:
  explicit CholeskyFactor(Matrix lower) : lower_(std::move(lower)) {}

  std::size_t dim() const noexcept { return lower_.rows(); }
  const Matrix& lower() const noexcept { return lower_; }
  double operator()(std::size_t i, std::size_t j) const { return lower_(i, j); }

  /// Solves (L L^T) x = b in place.
  void solve_in_place(std::span<double> b) const {
    const std::size_t n = dim();
    for (std::size_t i = 0; i < n; ++i) {
      double s = b[i];
      for (std::size_t k = 0; k < i; ++k) s -= lower_(i, k) * b[k];
      b[i] = s / lower_(i, i);
    }
    for (std::size_t ii = n; ii-- > 0;) {
      double s = b[ii];
      for (std::size_t k = ii + 1; k < n; ++k) s -= lower_(k, ii) * b[k];
      b[ii] = s / lower_(ii, ii);
    }
  }

  double determinant() const {
    double d = 1.0;
    for (std::size_t i = 0; i < dim(); ++i) d *= lower_(i, i) * lower_(i, i);
    return d;
  }

  /// L * L^T, used to check reconstruction.
  SymmetricMatrix reconstruct() const {
    const std::size_t n = dim();
    SymmetricMatrix out(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t k = 0; k <= j; ++k) s += lower_(i, k) * lower_(j, k);
        out.set(i, j, s);
      }
    return out;
  }

 private:
  Matrix lower_;
};

inline CholeskyFactor cholesky(const SymmetricMatrix& a) {
  const std::size_t n = a.dim();
  if (n == 0) throw error(errc::invalid_argument, "cholesky of an empty matrix");
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, a(i, i));
  const double floor = tolerances::cholesky_pivot * max_diag;

  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double pivot = a(j, j);
    for (std::size_t k = 0; k < j; ++k) pivot -= l(j, k) * l(j, k);
    if (!(pivot > floor) || max_diag <= 0.0)
      throw error(errc::not_positive_definite,
                  "pivot " + std::to_string(pivot) + " at index " + std::to_string(j));
    const double d = std::sqrt(pivot);
    l(j, j) = d;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / d;
    }
  }
  return CholeskyFactor(std::move(l));
}

inline SymmetricMatrix invert_spd(const SymmetricMatrix& a) {
  const CholeskyFactor factor = cholesky(a);
  const std::size_t n = a.dim();
  Matrix inv(n, n);
  std::vector<double> col(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::fill(col.begin(), col.end(), 0.0);
    col[k] = 1.0;
    factor.solve_in_place(col);
    for (std::size_t i = 0; i < n; ++i) inv(i, k) = col[i];
  }
  return SymmetricMatrix::from_average(inv);
}

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Matrix vectors;              // column k pairs with values[k]
};

namespace detail {

inline EigenDecomposition jacobi(const SymmetricMatrix& input, bool want_vectors) {
  const std::size_t n = input.dim();
  Matrix a = input.full();
  Matrix v = want_vectors ? Matrix::identity(n) : Matrix();
  const double target = tolerances::jacobi_offdiag * input.frobenius();

  auto off_norm = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(s);
  };

  int sweep = 0;
  while (off_norm() > target) {
    if (sweep++ >= tolerances::jacobi_max_sweeps)
      throw error(errc::no_convergence, "Jacobi eigensolver exceeded the sweep limit");
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        if (want_vectors) {
          for (std::size_t k = 0; k < n; ++k) {
            const double vkp = v(k, p);
            const double vkq = v(k, q);
            v(k, p) = c * vkp - s * vkq;
            v(k, q) = s * vkp + c * vkq;
          }
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });
  EigenDecomposition out;
  out.values.resize(n);
  if (want_vectors) out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    if (want_vectors)
      for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
  }
  return out;
}

// Householder reduction to tridiagonal form followed by implicit QL; values only.
inline std::vector<double> tridiagonal_ql(const SymmetricMatrix& sym) {
  const int n = static_cast<int>(sym.dim());
  Matrix a(sym.dim(), sym.dim());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = sym(i, j);
  std::vector<double> d(sym.dim()), e(sym.dim());

  for (int i = n - 1; i > 0; --i) {
    const int l = i - 1;
    double h = 0.0;
    if (l > 0) {
      double scale = 0.0;
      for (int k = 0; k <= l; ++k) scale += std::abs(a(i, k));
      if (scale == 0.0) {
        e[i] = a(i, l);
      } else {
        for (int k = 0; k <= l; ++k) {
          a(i, k) /= scale;
          h += a(i, k) * a(i, k);
        }
        double f = a(i, l);
        double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
        e[i] = scale * g;
        h -= f * g;
        a(i, l) = f - g;
        f = 0.0;
        for (int j = 0; j <= l; ++j) {
          g = 0.0;
          for (int k = 0; k <= j; ++k) g += a(j, k) * a(i, k);
          for (int k = j + 1; k <= l; ++k) g += a(k, j) * a(i, k);
          e[j] = g / h;
          f += e[j] * a(i, j);
        }
        const double hh = f / (h + h);
        for (int j = 0; j <= l; ++j) {
          f = a(i, j);
          e[j] = g = e[j] - hh * f;
          for (int k = 0; k <= j; ++k) a(j, k) -= f * e[k] + g * a(i, k);
        }
      }
    } else {
      e[i] = a(i, l);
    }
    d[i] = h;
  }
  for (int i = 0; i < n; ++i) d[i] = a(i, i);

  for (int i = 1; i < n; ++i) e[i - 1] = e[i];
  if (n > 0) e[n - 1] = 0.0;
  for (int l = 0; l < n; ++l) {
    int iter = 0;
    int m;
    do {
      for (m = l; m < n - 1; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd) break;
      }
      if (m != l) {
        if (iter++ == 60) throw error(errc::no_convergence, "QL eigensolver exceeded the iteration limit");
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0, c = 1.0, p = 0.0;
        int i;
        for (i = m - 1; i >= l; --i) {
          double f = s * e[i];
          const double b = c * e[i];
          e[i + 1] = (r = std::hypot(f, g));
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          d[i + 1] = g + (p = s * r);
          g = c * r - b;
        }
        if (r == 0.0 && i >= l) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
  std::sort(d.begin(), d.end());
  return d;
}

}  // namespace detail

/// All eigenvalues in ascending order.
inline std::vector<double> symmetric_eigenvalues(const SymmetricMatrix& a) {
  return detail::tridiagonal_ql(a);
}

inline EigenDecomposition symmetric_eigen(const SymmetricMatrix& a) {
  return detail::jacobi(a, true);
}

inline double condition_number(const SymmetricMatrix& a) {
  const auto ev = symmetric_eigenvalues(a);
  if (ev.front() <= 0.0) throw error(errc::not_positive_definite, "non-positive eigenvalue");
  return ev.back() / ev.front();
}

/// Moore-Penrose inverse of a positive semidefinite matrix.
inline SymmetricMatrix pseudo_inverse_psd(const SymmetricMatrix& a) {
  const auto eig = symmetric_eigen(a);
  const std::size_t n = a.dim();
  const double cutoff = tolerances::pseudo_inverse_rank * std::max(0.0, eig.values.back());
  SymmetricMatrix out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        if (eig.values[k] > cutoff) s += eig.vectors(i, k) * eig.vectors(j, k) / eig.values[k];
      out.set(i, j, s);
    }
  return out;
}

/// X^T X for an n x p matrix.
inline SymmetricMatrix cross_product(const Matrix& x) {
  const std::size_t p = x.cols();
  Matrix acc(p, p);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    for (std::size_t i = 0; i < p; ++i) {
      const double xi = row[i];
      if (xi == 0.0) continue;
      for (std::size_t j = i; j < p; ++j) acc(i, j) += xi * row[j];
    }
  }
  SymmetricMatrix out(p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = i; j < p; ++j) out.set(i, j, acc(i, j));
  return out;
}

inline double max_abs_difference(const SymmetricMatrix& a, const SymmetricMatrix& b) {
  if (a.dim() != b.dim()) throw error(errc::dimension_mismatch, "matrix dims differ");
  double m = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i)
    for (std::size_t j = 0; j < a.dim(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
  return m;
}

}  // namespace ggmko
