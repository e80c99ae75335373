#pragma once

// Independent eigenvalue oracle for small matrices: characteristic
// polynomial via Faddeev-LeVerrier, roots via Durand-Kerner iteration.
// Shares no code path with the Hessenberg/QR solver under test.

#include <complex>
#include <vector>

#include "llab/matrix.hpp"

namespace testsupport {

// Coefficients of det(zI - A) = z^n + c[0] z^{n-1} + ... + c[n-1].
inline std::vector<double> char_poly(const llab::Mat& a) {
  const std::size_t n = a.rows;
  std::vector<double> c(n);
  llab::Mat m = a;
  for (std::size_t k = 1; k <= n; ++k) {
    double tr = 0.0;
    for (std::size_t i = 0; i < n; ++i) tr += m(i, i);
    c[k - 1] = -tr / static_cast<double>(k);
    if (k == n) break;
    llab::Mat shifted = m;
    for (std::size_t i = 0; i < n; ++i) shifted(i, i) += c[k - 1];
    m = llab::matmul(a, shifted);
  }
  return c;
}

// All complex roots of z^n + c[0] z^{n-1} + ... + c[n-1].
inline std::vector<std::complex<double>> durand_kerner(
    const std::vector<double>& c, int max_iter = 2000, double tol = 1e-14) {
  using C = std::complex<double>;
  const std::size_t n = c.size();
  std::vector<C> z(n);
  const C seed(0.4, 0.9);
  C p(1.0, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    p *= seed;
    z[i] = p;
  }
  auto eval = [&](C x) {
    C acc(1.0, 0.0);
    for (std::size_t k = 0; k < n; ++k) acc = acc * x + c[k];
    return acc;
  };
  for (int it = 0; it < max_iter; ++it) {
    double moved = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      C denom(1.0, 0.0);
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) denom *= (z[i] - z[j]);
      if (std::abs(denom) < 1e-300) continue;
      const C delta = eval(z[i]) / denom;
      z[i] -= delta;
      moved = std::max(moved, std::abs(delta));
    }
    if (moved < tol) break;
  }
  return z;
}

inline std::vector<std::complex<double>> oracle_eigenvalues(const llab::Mat& a) {
  return durand_kerner(char_poly(a));
}

// Greedy multiset match; returns the largest pairing distance.
inline double spectrum_distance(std::vector<std::complex<double>> a,
                                std::vector<std::complex<double>> b) {
  double worst = 0.0;
  for (const auto& x : a) {
    double best = 1e300;
    std::size_t bi = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double d = std::abs(x - b[j]);
      if (d < best) {
        best = d;
        bi = j;
      }
    }
    worst = std::max(worst, best);
    b.erase(b.begin() + static_cast<std::ptrdiff_t>(bi));
  }
  return worst;
}

}  // namespace testsupport
