#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <vector>

#include "llab/errors.hpp"
#include "llab/matrix.hpp"

namespace llab {

// ---------------------------------------------------------------------------
// symmetric eigendecomposition (cyclic Jacobi)
// ---------------------------------------------------------------------------

struct SymEig {
  std::vector<double> lambda;  // ascending
  Mat v;                       // columns are eigenvectors, S = V diag(l) V^T
};

inline SymEig jacobi_sym_eig(const Mat& input, int max_sweeps = 60) {
  if (!input.square()) throw ShapeError("jacobi_sym_eig: matrix not square");
  const std::size_t n = input.rows;
  Mat a = input;
  Mat v = Mat::identity(n);

  auto offdiag = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) s += a(i, j) * a(i, j);
    return std::sqrt(2.0 * s);
  };

  const double scale = std::max(1.0, fro_norm(a));
  bool done = false;
  for (int sweep = 0; sweep < max_sweeps && !done; ++sweep) {
    if (offdiag() <= 1e-14 * scale) {
      done = true;
      break;
    }
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-16 * scale) continue;
        const double zeta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (zeta >= 0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        // A := J^T A J on rows/cols p,q
        for (std::size_t i = 0; i < n; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (std::size_t j = 0; j < n; ++j) {
          const double apj = a(p, j), aqj = a(q, j);
          a(p, j) = c * apj - s * aqj;
          a(q, j) = s * apj + c * aqj;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
  }
  if (!done && offdiag() > 1e-10 * scale)
    throw NumericError("jacobi_sym_eig: no convergence");

  SymEig r;
  r.lambda.resize(n);
  for (std::size_t i = 0; i < n; ++i) r.lambda[i] = a(i, i);
  // sort ascending, permuting eigenvectors alongside
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return r.lambda[x] < r.lambda[y];
  });
  SymEig sorted;
  sorted.lambda.resize(n);
  sorted.v = Mat(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    sorted.lambda[j] = r.lambda[order[j]];
    for (std::size_t i = 0; i < n; ++i) sorted.v(i, j) = v(i, order[j]);
  }
  return sorted;
}

// ---------------------------------------------------------------------------
// nonsymmetric eigenvalues: balance + Householder Hessenberg + Francis
// double-shift QR
// ---------------------------------------------------------------------------

struct SpectrumResult {
  std::vector<std::complex<double>> eigenvalues;  // size n
  bool converged = true;
  int iterations = 0;  // QR sweeps performed
};

namespace detail {

/// Similarity scaling by powers of 2 to equalize row/column norms
/// (improves QR accuracy on badly scaled inputs such as companion
/// matrices). Eigenvalues are unchanged.
inline void balance_in_place(Mat& a) {
  const std::size_t n = a.rows;
  const double radix = 2.0, sqrdx = radix * radix;
  bool last = false;
  while (!last) {
    last = true;
    for (std::size_t i = 0; i < n; ++i) {
      double r = 0.0, c = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) {
          c += std::abs(a(j, i));
          r += std::abs(a(i, j));
        }
      if (c != 0.0 && r != 0.0) {
        double g = r / radix, f = 1.0;
        const double s = c + r;
        while (c < g) {
          f *= radix;
          c *= sqrdx;
        }
        g = r * radix;
        while (c > g) {
          f /= radix;
          c /= sqrdx;
        }
        if ((c + r) / f < 0.95 * s) {
          last = false;
          const double ginv = 1.0 / f;
          for (std::size_t j = 0; j < n; ++j) a(i, j) *= ginv;
          for (std::size_t j = 0; j < n; ++j) a(j, i) *= f;
        }
      }
    }
  }
}

/// Householder reduction to upper Hessenberg form (transforms discarded;
/// eigenvalues only).
inline void hessenberg_in_place(Mat& a) {
  const std::size_t n = a.rows;
  if (n < 3) return;
  std::vector<double> v(n);
  for (std::size_t k = 0; k + 2 < n; ++k) {
    double xnorm = 0.0;
    for (std::size_t i = k + 1; i < n; ++i) xnorm += a(i, k) * a(i, k);
    xnorm = std::sqrt(xnorm);
    if (xnorm == 0.0) continue;
    const double x0 = a(k + 1, k);
    const double alpha = (x0 >= 0 ? -xnorm : xnorm);
    double vnorm2 = 0.0;
    v[k + 1] = x0 - alpha;
    vnorm2 += v[k + 1] * v[k + 1];
    for (std::size_t i = k + 2; i < n; ++i) {
      v[i] = a(i, k);
      vnorm2 += v[i] * v[i];
    }
    if (vnorm2 == 0.0) continue;
    const double inv = 2.0 / vnorm2;
    // left: A[k+1:, k:] -= inv * v (v^T A[k+1:, k:])
    for (std::size_t j = k; j < n; ++j) {
      double dot = 0.0;
      for (std::size_t i = k + 1; i < n; ++i) dot += v[i] * a(i, j);
      dot *= inv;
      for (std::size_t i = k + 1; i < n; ++i) a(i, j) -= dot * v[i];
    }
    // right: A[:, k+1:] -= inv * (A[:, k+1:] v) v^T
    for (std::size_t i = 0; i < n; ++i) {
      double dot = 0.0;
      for (std::size_t j = k + 1; j < n; ++j) dot += a(i, j) * v[j];
      dot *= inv;
      for (std::size_t j = k + 1; j < n; ++j) a(i, j) -= dot * v[j];
    }
    a(k + 1, k) = alpha;
    for (std::size_t i = k + 2; i < n; ++i) a(i, k) = 0.0;
  }
}

inline double sign_of(double magnitude, double sign_source) {
  return sign_source >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude);
}

/// Francis double-shift QR on an upper Hessenberg matrix (classic
/// EISPACK-style sweep). Fills wr/wi; returns false if the iteration cap is
/// hit, in which case remaining eigenvalues are approximated by the
/// unconverged block's diagonal.
inline bool hqr_in_place(Mat& a, std::vector<double>& wr,
                         std::vector<double>& wi, int max_total_sweeps,
                         int& sweeps_used) {
  const int n = static_cast<int>(a.rows);
  const double eps = std::numeric_limits<double>::epsilon();
  wr.assign(static_cast<std::size_t>(n), 0.0);
  wi.assign(static_cast<std::size_t>(n), 0.0);

  double anorm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = std::max(i - 1, 0); j < n; ++j)
      anorm += std::abs(a(static_cast<std::size_t>(i), static_cast<std::size_t>(j)));
  if (anorm == 0.0) anorm = 1.0;

  auto A = [&](int i, int j) -> double& {
    return a(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
  };

  int nn = n - 1;
  double t = 0.0;
  sweeps_used = 0;
  while (nn >= 0) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l >= 1; --l) {
        double s = std::abs(A(l - 1, l - 1)) + std::abs(A(l, l));
        if (s == 0.0) s = anorm;
        if (std::abs(A(l, l - 1)) <= eps * s) {
          A(l, l - 1) = 0.0;
          break;
        }
      }
      if (l < 0) l = 0;
      double x = A(nn, nn);
      if (l == nn) {
        wr[static_cast<std::size_t>(nn)] = x + t;
        wi[static_cast<std::size_t>(nn)] = 0.0;
        --nn;
      } else {
        double y = A(nn - 1, nn - 1);
        double w = A(nn, nn - 1) * A(nn - 1, nn);
        if (l == nn - 1) {
          double p = 0.5 * (y - x);
          double q = p * p + w;
          double z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + sign_of(z, p);
            wr[static_cast<std::size_t>(nn - 1)] = wr[static_cast<std::size_t>(nn)] = x + z;
            if (z != 0.0) wr[static_cast<std::size_t>(nn)] = x - w / z;
            wi[static_cast<std::size_t>(nn - 1)] = wi[static_cast<std::size_t>(nn)] = 0.0;
          } else {
            wr[static_cast<std::size_t>(nn - 1)] = wr[static_cast<std::size_t>(nn)] = x + p;
            wi[static_cast<std::size_t>(nn)] = z;
            wi[static_cast<std::size_t>(nn - 1)] = -z;
          }
          nn -= 2;
        } else {
          if (sweeps_used >= max_total_sweeps) {
            // best effort: remaining block approximated by its diagonal
            for (int i = 0; i <= nn; ++i) {
              wr[static_cast<std::size_t>(i)] = A(i, i) + t;
              wi[static_cast<std::size_t>(i)] = 0.0;
            }
            return false;
          }
          if (its != 0 && its % 10 == 0) {
            // exceptional shift
            t += x;
            for (int i = 0; i <= nn; ++i) A(i, i) -= x;
            double s = std::abs(A(nn, nn - 1)) + std::abs(A(nn - 1, nn - 2));
            y = x = 0.75 * s;
            w = -0.4375 * s * s;
          }
          ++its;
          ++sweeps_used;
          int m;
          double p = 0.0, q = 0.0, r = 0.0, z = 0.0;
          for (m = nn - 2; m >= l; --m) {
            z = A(m, m);
            double rr = x - z;
            double ss = y - z;
            p = (rr * ss - w) / A(m + 1, m) + A(m, m + 1);
            q = A(m + 1, m + 1) - z - rr - ss;
            r = A(m + 2, m + 1);
            double sc = std::abs(p) + std::abs(q) + std::abs(r);
            p /= sc;
            q /= sc;
            r /= sc;
            if (m == l) break;
            const double u = std::abs(A(m, m - 1)) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(A(m - 1, m - 1)) +
                                            std::abs(z) + std::abs(A(m + 1, m + 1)));
            if (u <= eps * v) break;
          }
          for (int i = m + 2; i <= nn; ++i) {
            A(i, i - 2) = 0.0;
            if (i != m + 2) A(i, i - 3) = 0.0;
          }
          for (int k = m; k <= nn - 1; ++k) {
            if (k != m) {
              p = A(k, k - 1);
              q = A(k + 1, k - 1);
              r = (k != nn - 1) ? A(k + 2, k - 1) : 0.0;
              x = std::abs(p) + std::abs(q) + std::abs(r);
              if (x != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            const double s = sign_of(std::sqrt(p * p + q * q + r * r), p);
            if (s == 0.0) continue;
            if (k == m) {
              if (l != m) A(k, k - 1) = -A(k, k - 1);
            } else {
              A(k, k - 1) = -s * x;
            }
            p += s;
            x = p / s;
            y = q / s;
            z = r / s;
            q /= p;
            r /= p;
            for (int j = k; j <= nn; ++j) {
              double pp = A(k, j) + q * A(k + 1, j);
              if (k != nn - 1) {
                pp += r * A(k + 2, j);
                A(k + 2, j) -= pp * z;
              }
              A(k + 1, j) -= pp * y;
              A(k, j) -= pp * x;
            }
            const int mmin = nn < k + 3 ? nn : k + 3;
            for (int i = l; i <= mmin; ++i) {
              double pp = x * A(i, k) + y * A(i, k + 1);
              if (k != nn - 1) {
                pp += z * A(i, k + 2);
                A(i, k + 2) -= pp * r;
              }
              A(i, k + 1) -= pp * q;
              A(i, k) -= pp;
            }
          }
        }
      }
    } while (l < nn - 1);
  }
  return true;
}

}  // namespace detail

/// Full complex spectrum of a real square matrix. Non-real eigenvalues come
/// out in adjacent conjugate pairs (+imag first); ordering is by ascending
/// real part, then |imag|.
inline SpectrumResult eigenvalues(const Mat& input, int max_total_sweeps = 0) {
  if (!input.square()) throw ShapeError("eigenvalues: matrix not square");
  if (!all_finite(input)) throw NumericError("eigenvalues: non-finite entries");
  const std::size_t n = input.rows;
  SpectrumResult out;
  if (n == 0) return out;
  if (max_total_sweeps <= 0) max_total_sweeps = 100 * static_cast<int>(n);

  Mat a = input;
  detail::balance_in_place(a);
  detail::hessenberg_in_place(a);
  std::vector<double> wr, wi;
  int sweeps = 0;
  out.converged = detail::hqr_in_place(a, wr, wi, max_total_sweeps, sweeps);
  out.iterations = sweeps;

  std::vector<std::complex<double>> eig(n);
  for (std::size_t i = 0; i < n; ++i) eig[i] = {wr[i], wi[i]};
  std::sort(eig.begin(), eig.end(), [](const auto& x, const auto& y) {
    if (x.real() != y.real()) return x.real() < y.real();
    if (std::abs(x.imag()) != std::abs(y.imag()))
      return std::abs(x.imag()) < std::abs(y.imag());
    return x.imag() > y.imag();
  });
  out.eigenvalues = std::move(eig);
  return out;
}

}  // namespace llab
