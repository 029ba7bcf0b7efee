#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace mtpinn {

/// Learnable coefficients of  gamma * dEDA/dt + alpha0 * EDA = beta^T e.
/// The physics-loss weight is softplus(rho), floored by ModelConfig::lambda_floor.
struct PhysicsParams {
  double alpha0 = 1.0;
  std::array<double, 3> beta{0.1, 0.1, 0.1};
  double gamma = 1.0;
  double rho = 0.0;

  friend bool operator==(const PhysicsParams &, const PhysicsParams &) = default;
};

inline double softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

/// Inverse of softplus for y > 0: log(exp(y) - 1).
inline double softplus_inverse(double y) {
  return y > 30.0 ? y + std::log1p(-std::exp(-y)) : std::log(std::expm1(y));
}

inline double effective_lambda(const PhysicsParams &p, double floor) {
  return std::max(softplus(p.rho), floor);
}

/// beta^T e
inline double drive(const PhysicsParams &p, const std::array<double, 3> &e) {
  return p.beta[0] * e[0] + p.beta[1] * e[1] + p.beta[2] * e[2];
}

} // namespace mtpinn
