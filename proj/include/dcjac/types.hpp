#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace dcjac {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Shared relative-absolute tie rule: |a - b| <= tol * (1 + |reference|).
inline bool within_hybrid(double a, double b, double reference, double tol) {
  return std::abs(a - b) <= tol * (1.0 + std::abs(reference));
}

}  // namespace dcjac
