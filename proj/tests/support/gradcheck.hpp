#pragma once

// Central finite-difference oracle for gradient checks. Independent of the
// tape: it only re-evaluates the forward function at perturbed inputs.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "llab/tensor.hpp"

namespace testsupport {

using ScalarFn = std::function<llab::Tensor(const llab::Tensor&)>;

// Max relative error between analytic gradient and central differences.
// Relative scale is max(|analytic| + |fd|, floor) so near-zero gradients
// degrade to an absolute comparison.
inline double fd_max_rel_err(const llab::Shape& shape,
                             const std::vector<double>& x0, const ScalarFn& f,
                             double h = 1e-5, double floor = 1e-3) {
  using llab::Tensor;
  Tensor x = Tensor::param(shape, x0);
  Tensor loss = f(x);
  llab::backward(loss);
  const std::vector<double> analytic = x.grad();

  double max_rel = 0.0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    std::vector<double> xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    const double fp = f(Tensor::from(shape, xp)).item();
    const double fm = f(Tensor::from(shape, xm)).item();
    const double fd = (fp - fm) / (2.0 * h);
    const double denom = std::max(std::abs(analytic[i]) + std::abs(fd), floor);
    max_rel = std::max(max_rel, std::abs(analytic[i] - fd) / denom);
  }
  return max_rel;
}

inline std::vector<double> random_vec(llab::Rng& rng, std::size_t n, double lo,
                                      double hi) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace testsupport
