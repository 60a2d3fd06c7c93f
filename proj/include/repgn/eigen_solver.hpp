#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "repgn/errors.hpp"

namespace repgn {

struct EigenOptions {
  /// Relative size below which a subdiagonal entry is treated as zero.
  double tolerance = 1e-10;
  /// QL sweeps allowed per eigenvalue before giving up.
  int max_iterations = 1000;
};

struct SymmetricEigen {
  Eigen::VectorXd values;  // ascending
  Eigen::MatrixXd vectors; // column k pairs with values[k]
};

namespace detail {

// Householder reduction of the symmetric matrix held in v to tridiagonal form.
// On exit d holds the diagonal, e the subdiagonal (e[0] = 0) and v the
// accumulated orthogonal transformation.
inline void householder_tridiagonalize(Eigen::MatrixXd &v, Eigen::VectorXd &d, Eigen::VectorXd &e) {
  const Eigen::Index n = v.rows();
  for (Eigen::Index j = 0; j < n; ++j)
    d[j] = v(n - 1, j);

  for (Eigen::Index i = n - 1; i > 0; --i) {
    double scale = 0.0;
    double h = 0.0;
    for (Eigen::Index k = 0; k < i; ++k)
      scale += std::abs(d[k]);
    if (scale == 0.0) {
      e[i] = d[i - 1];
      for (Eigen::Index j = 0; j < i; ++j) {
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
        v(j, i) = 0.0;
      }
    } else {
      for (Eigen::Index k = 0; k < i; ++k) {
        d[k] /= scale;
        h += d[k] * d[k];
      }
      double f = d[i - 1];
      double g = std::sqrt(h);
      if (f > 0)
        g = -g;
      e[i] = scale * g;
      h -= f * g;
      d[i - 1] = f - g;
      for (Eigen::Index j = 0; j < i; ++j)
        e[j] = 0.0;

      for (Eigen::Index j = 0; j < i; ++j) {
        f = d[j];
        v(j, i) = f;
        g = e[j] + v(j, j) * f;
        for (Eigen::Index k = j + 1; k <= i - 1; ++k) {
          g += v(k, j) * d[k];
          e[k] += v(k, j) * f;
        }
        e[j] = g;
      }
      f = 0.0;
      for (Eigen::Index j = 0; j < i; ++j) {
        e[j] /= h;
        f += e[j] * d[j];
      }
      const double hh = f / (h + h);
      for (Eigen::Index j = 0; j < i; ++j)
        e[j] -= hh * d[j];
      for (Eigen::Index j = 0; j < i; ++j) {
        f = d[j];
        g = e[j];
        for (Eigen::Index k = j; k <= i - 1; ++k)
          v(k, j) -= (f * e[k] + g * d[k]);
        d[j] = v(i - 1, j);
        v(i, j) = 0.0;
      }
    }
    d[i] = h;
  }

  for (Eigen::Index i = 0; i < n - 1; ++i) {
    v(n - 1, i) = v(i, i);
    v(i, i) = 1.0;
    const double h = d[i + 1];
    if (h != 0.0) {
      for (Eigen::Index k = 0; k <= i; ++k)
        d[k] = v(k, i + 1) / h;
      for (Eigen::Index j = 0; j <= i; ++j) {
        double g = 0.0;
        for (Eigen::Index k = 0; k <= i; ++k)
          g += v(k, i + 1) * v(k, j);
        for (Eigen::Index k = 0; k <= i; ++k)
          v(k, j) -= g * d[k];
      }
    }
    for (Eigen::Index k = 0; k <= i; ++k)
      v(k, i + 1) = 0.0;
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    d[j] = v(n - 1, j);
    v(n - 1, j) = 0.0;
  }
  v(n - 1, n - 1) = 1.0;
  e[0] = 0.0;
}

// Implicit QL iteration with Wilkinson-style shifts on the tridiagonal (d, e),
// rotating the columns of v along.
inline void tridiagonal_ql(Eigen::MatrixXd &v, Eigen::VectorXd &d, Eigen::VectorXd &e,
                           const EigenOptions &opts) {
  const Eigen::Index n = v.rows();
  for (Eigen::Index i = 1; i < n; ++i)
    e[i - 1] = e[i];
  e[n - 1] = 0.0;

  // tolerance is only consulted once the iteration budget is spent
  const double eps = std::numeric_limits<double>::epsilon();
  double f = 0.0;
  double tst1 = 0.0;
  for (Eigen::Index l = 0; l < n; ++l) {
    tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
    Eigen::Index m = l;
    while (m < n) {
      if (std::abs(e[m]) <= eps * tst1)
        break;
      ++m;
    }
    if (m > l) {
      int iter = 0;
      do {
        if (++iter > opts.max_iterations) {
          if (std::abs(e[l]) <= opts.tolerance * tst1)
            break;
          throw NumericalFailure("eigensolver: no convergence within " +
                                 std::to_string(opts.max_iterations) + " iterations");
        }
        double g = d[l];
        double p = (d[l + 1] - g) / (2.0 * e[l]);
        double r = std::hypot(p, 1.0);
        if (p < 0)
          r = -r;
        d[l] = e[l] / (p + r);
        d[l + 1] = e[l] * (p + r);
        const double dl1 = d[l + 1];
        double h = g - d[l];
        for (Eigen::Index i = l + 2; i < n; ++i)
          d[i] -= h;
        f += h;

        p = d[m];
        double c = 1.0, c2 = 1.0, c3 = 1.0;
        const double el1 = e[l + 1];
        double s = 0.0, s2 = 0.0;
        for (Eigen::Index i = m - 1; i >= l; --i) {
          c3 = c2;
          c2 = c;
          s2 = s;
          g = c * e[i];
          h = c * p;
          r = std::hypot(p, e[i]);
          e[i + 1] = s * r;
          s = e[i] / r;
          c = p / r;
          p = c * d[i] - s * g;
          d[i + 1] = h + s * (c * g + s * d[i]);
          for (Eigen::Index k = 0; k < n; ++k) {
            h = v(k, i + 1);
            v(k, i + 1) = s * v(k, i) + c * h;
            v(k, i) = c * v(k, i) - s * h;
          }
        }
        p = -s * s2 * c3 * el1 * e[l] / dl1;
        e[l] = s * p;
        d[l] = c * p;
        if (!std::isfinite(d[l]) || !std::isfinite(e[l]))
          throw NumericalFailure("eigensolver: non-finite value during QL iteration");
      } while (std::abs(e[l]) > eps * tst1);
    }
    d[l] += f;
    e[l] = 0.0;
  }
}

} // namespace detail

/// Full eigendecomposition of a dense symmetric matrix (Householder
/// tridiagonalization followed by implicit QL). Deterministic for a given
/// input; eigenvalues are returned in ascending order.
inline SymmetricEigen symmetric_eigen(const Eigen::MatrixXd &a, const EigenOptions &opts = {}) {
  if (a.rows() != a.cols())
    throw InvalidInput("symmetric_eigen: matrix is not square");
  if (!a.allFinite())
    throw NumericalFailure("symmetric_eigen: matrix has non-finite entries");
  const Eigen::Index n = a.rows();
  SymmetricEigen out;
  if (n == 0)
    return out;

  Eigen::MatrixXd v = 0.5 * (a + a.transpose());
  Eigen::VectorXd d(n), e(n);
  detail::householder_tridiagonalize(v, d, e);
  detail::tridiagonal_ql(v, d, e, opts);

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return d[x] < d[y]; });
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values[k] = d[order[static_cast<std::size_t>(k)]];
    out.vectors.col(k) = v.col(order[static_cast<std::size_t>(k)]);
  }
  return out;
}

} // namespace repgn
