#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sensched/estimation.hpp"
#include "sensched/rng.hpp"

namespace sensched {

/// Central-difference directional derivative check: for random unit
/// directions d, compares (f(p + eps d) - f(p - eps d)) / (2 eps) against
/// <grad, d>. Returns the worst relative error seen.
double directional_gradient_error(const std::function<double(const Vector&)>& f,
                                  const Vector& params, const Vector& analytic_grad,
                                  int directions, double eps, Rng& rng);

struct LossGradCheck {
  std::string name;
  double max_rel_error = 0.0;
  int directions = 0;
  bool pass = false;
};

/// Finite-difference verification of the three training losses (Q-network
/// composite loss, critic loss, actor loss in its default reconciled form)
/// on a synthetic small instance with both SE and non-SE records in the
/// batch. Tolerance per direction: 1e-4 at eps = 1e-5.
std::vector<LossGradCheck> run_loss_gradient_checks(std::uint64_t seed, int directions,
                                                    double tol = 1e-4);

}  // namespace sensched
