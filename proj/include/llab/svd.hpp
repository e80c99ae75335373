#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>

#include "llab/errors.hpp"
#include "llab/matrix.hpp"

namespace llab {

struct SvdResult {
  Mat u;                      // m x n, orthonormal columns
  std::vector<double> sigma;  // n, descending
  Mat v;                      // n x n, orthogonal
};

/// One-sided Jacobi SVD for m >= n. Rotates column pairs of a working copy
/// until all pairs are mutually orthogonal; column norms become the singular
/// values. Small and accurate at the c <= 128 sizes used here.
inline SvdResult jacobi_svd(const Mat& input, int max_sweeps = 60) {
  if (input.rows < input.cols)
    throw ShapeError("jacobi_svd expects rows >= cols");
  const std::size_t m = input.rows, n = input.cols;
  Mat w = input;
  Mat v = Mat::identity(n);
  const double eps = 1e-15;

  auto col_dot = [&](std::size_t p, std::size_t q) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += w(i, p) * w(i, q);
    return s;
  };

  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = col_dot(p, p);
        const double beta = col_dot(q, q);
        const double gamma = col_dot(p, q);
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta) || gamma == 0.0)
          continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double wp = w(i, p), wq = w(i, q);
          w(i, p) = c * wp - s * wq;
          w(i, q) = s * wp + c * wq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) throw NumericError("jacobi_svd: no convergence");

  SvdResult r;
  r.sigma.resize(n);
  r.u = Mat(m, n);
  double sig_max = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += w(i, j) * w(i, j);
    r.sigma[j] = std::sqrt(s);
    sig_max = std::max(sig_max, r.sigma[j]);
  }
  // normalize nonzero columns into U; rank-deficient columns are completed
  // afterwards so U always has orthonormal columns.
  const double tiny = sig_max > 0 ? sig_max * 1e-13 : 1.0;
  std::vector<std::size_t> degenerate;
  for (std::size_t j = 0; j < n; ++j) {
    if (r.sigma[j] > tiny) {
      const double inv = 1.0 / r.sigma[j];
      for (std::size_t i = 0; i < m; ++i) r.u(i, j) = w(i, j) * inv;
    } else {
      r.sigma[j] = 0.0;
      degenerate.push_back(j);
    }
  }
  for (std::size_t j : degenerate) {
    // Gram-Schmidt a basis vector against the existing columns.
    for (std::size_t cand = 0; cand < m; ++cand) {
      std::vector<double> e(m, 0.0);
      e[cand] = 1.0;
      for (std::size_t k = 0; k < n; ++k) {
        if (k == j || (r.sigma[k] == 0.0 && k > j)) continue;
        double d = 0.0;
        for (std::size_t i = 0; i < m; ++i) d += e[i] * r.u(i, k);
        for (std::size_t i = 0; i < m; ++i) e[i] -= d * r.u(i, k);
      }
      double nrm = 0.0;
      for (double x : e) nrm += x * x;
      nrm = std::sqrt(nrm);
      if (nrm > 1e-6) {
        for (std::size_t i = 0; i < m; ++i) r.u(i, j) = e[i] / nrm;
        break;
      }
    }
  }
  r.v = std::move(v);

  // sort descending by sigma
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return r.sigma[x] > r.sigma[y];
  });
  SvdResult sorted;
  sorted.sigma.resize(n);
  sorted.u = Mat(m, n);
  sorted.v = Mat(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    sorted.sigma[j] = r.sigma[order[j]];
    for (std::size_t i = 0; i < m; ++i) sorted.u(i, j) = r.u(i, order[j]);
    for (std::size_t i = 0; i < n; ++i) sorted.v(i, j) = r.v(i, order[j]);
  }
  return sorted;
}

}  // namespace llab
