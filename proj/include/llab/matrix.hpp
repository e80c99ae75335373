#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "llab/errors.hpp"

namespace llab {

/// Plain dense row-major matrix for the operator/linear-algebra side.
/// No gradient participation; all fits and eigensolvers work on Mat.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), a(r * c, fill) {}

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return a[i * cols + j];
  }

  bool square() const { return rows == cols; }
};

inline Mat matmul(const Mat& x, const Mat& y) {
  if (x.cols != y.rows) throw ShapeError("Mat matmul: inner dims disagree");
  Mat out(x.rows, y.cols);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t l = 0; l < x.cols; ++l) {
      const double v = x(i, l);
      for (std::size_t j = 0; j < y.cols; ++j) out(i, j) += v * y(l, j);
    }
  return out;
}

inline Mat transpose(const Mat& x) {
  Mat out(x.cols, x.rows);
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) out(j, i) = x(i, j);
  return out;
}

inline Mat operator+(const Mat& x, const Mat& y) {
  if (x.rows != y.rows || x.cols != y.cols) throw ShapeError("Mat add: shape");
  Mat out = x;
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] += y.a[i];
  return out;
}

inline Mat operator-(const Mat& x, const Mat& y) {
  if (x.rows != y.rows || x.cols != y.cols) throw ShapeError("Mat sub: shape");
  Mat out = x;
  for (std::size_t i = 0; i < out.a.size(); ++i) out.a[i] -= y.a[i];
  return out;
}

inline Mat operator*(const Mat& x, double s) {
  Mat out = x;
  for (double& v : out.a) v *= s;
  return out;
}

inline double fro_norm(const Mat& x) {
  double s = 0.0;
  for (double v : x.a) s += v * v;
  return std::sqrt(s);
}

inline double max_abs(const Mat& x) {
  double m = 0.0;
  for (double v : x.a) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(const Mat& x) {
  for (double v : x.a)
    if (!std::isfinite(v)) return false;
  return true;
}

/// Deviation from orthogonality, ||M^T M - I||_F.
inline double orthogonality_defect(const Mat& m) {
  return fro_norm(matmul(transpose(m), m) - Mat::identity(m.cols));
}

/// Deviation from symmetry, ||M - M^T||_F.
inline double symmetry_defect(const Mat& m) {
  return fro_norm(m - transpose(m));
}

/// Cholesky factorization of an SPD matrix; throws NumericError on
/// breakdown (non-positive pivot).
inline Mat cholesky(const Mat& s) {
  if (!s.square()) throw ShapeError("cholesky: matrix not square");
  const std::size_t n = s.rows;
  Mat l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double acc = s(i, j);
      for (std::size_t k = 0; k < j; ++k) acc -= l(i, k) * l(j, k);
      if (i == j) {
        if (acc <= 0.0)
          throw NumericError("cholesky: matrix not positive definite");
        l(i, j) = std::sqrt(acc);
      } else {
        l(i, j) = acc / l(j, j);
      }
    }
  }
  return l;
}

/// Solve S X = B for SPD S via Cholesky.
inline Mat cholesky_solve(const Mat& s, const Mat& b) {
  if (s.rows != b.rows) throw ShapeError("cholesky_solve: shape mismatch");
  const Mat l = cholesky(s);
  const std::size_t n = s.rows, m = b.cols;
  Mat x(n, m);
  // forward: L y = b
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      double acc = b(i, c);
      for (std::size_t k = 0; k < i; ++k) acc -= l(i, k) * x(k, c);
      x(i, c) = acc / l(i, i);
    }
  // backward: L^T x = y
  for (std::size_t c = 0; c < m; ++c)
    for (std::size_t ii = n; ii-- > 0;) {
      double acc = x(ii, c);
      for (std::size_t k = ii + 1; k < n; ++k) acc -= l(k, ii) * x(k, c);
      x(ii, c) = acc / l(ii, ii);
    }
  return x;
}

}  // namespace llab
