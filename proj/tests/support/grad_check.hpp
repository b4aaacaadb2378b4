// Central finite-difference gradient checking (64-bit, step 1e-5).
#pragma once

#include <cmath>
#include <functional>

#include "bodygraph/nn.hpp"

namespace gradcheck {

// Central differences at step 1e-5 carry cancellation noise of about
// eps * |loss| / (2 * step) ~ 1e-11; differences below that scale mean "both
// zero", not disagreement.
inline double rel_err(double a, double b) {
  const double diff = std::abs(a - b);
  if (diff < 1e-7) return 0.0;
  return diff / std::max(std::abs(a), std::abs(b));
}

// Checks d(loss)/d(storage) for one tensor against central differences.
// `loss` must re-run the forward pass from current state. Returns the max
// relative error.
inline double check_tensor(bodygraph::nn::Matrix& storage, const bodygraph::nn::Matrix& analytic,
                           const std::function<double()>& loss, double step = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < storage.rows(); ++i)
    for (Eigen::Index j = 0; j < storage.cols(); ++j) {
      const double saved = storage(i, j);
      storage(i, j) = saved + step;
      const double up = loss();
      storage(i, j) = saved - step;
      const double down = loss();
      storage(i, j) = saved;
      const double numeric = (up - down) / (2.0 * step);
      worst = std::max(worst, rel_err(analytic(i, j), numeric));
    }
  return worst;
}

// Projection loss L = sum(out .* p) so dL/dout = p.
inline double projection_loss(const bodygraph::nn::Matrix& out, const bodygraph::nn::Matrix& p) {
  return (out.array() * p.array()).sum();
}

}  // namespace gradcheck
