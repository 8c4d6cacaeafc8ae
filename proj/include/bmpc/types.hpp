#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace bmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Thrown when a matrix factorization fails or produces non-finite results.
class FactorizationError : public std::runtime_error {
 public:
  explicit FactorizationError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown when a Hessian block that must be positive definite is not.
/// Callers respond by increasing the regularization and retrying.
class IndefiniteHessianError : public std::runtime_error {
 public:
  explicit IndefiniteHessianError(const std::string& what) : std::runtime_error(what) {}
};

/// One step of a time-varying LQR problem:
///   x+ = A x + B u + c
///   cost = q'x + r'u + 1/2 x'Qx + u'Mx + 1/2 u'Ru
struct StageModel {
  MatrixXd A;  // nx x nx
  MatrixXd B;  // nx x nu
  VectorXd c;  // nx, affine offset / multiple-shooting defect
  MatrixXd Q;  // nx x nx, symmetric
  MatrixXd R;  // nu x nu, symmetric positive definite
  MatrixXd M;  // nu x nx
  VectorXd q;  // nx
  VectorXd r;  // nu

  int state_dim() const { return static_cast<int>(A.rows()); }
  int input_dim() const { return static_cast<int>(B.cols()); }
};

/// Quadratic value function V(x) = 1/2 x'Px + p'x (constant term not tracked).
struct ValueFunction {
  MatrixXd P;
  VectorXd p;

  static ValueFunction Zero(int nx) {
    return {MatrixXd::Zero(nx, nx), VectorXd::Zero(nx)};
  }
};

/// Affine feedback law u = K x + k acting on state deviations.
struct FeedbackPolicy {
  MatrixXd K;  // nu x nx
  VectorXd k;  // nu
};

inline void symmetrize(MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

inline bool all_finite(const MatrixXd& m) { return m.allFinite(); }
inline bool all_finite(const VectorXd& v) { return v.allFinite(); }

}  // namespace bmpc
