#pragma once

#include <Eigen/Dense>

#include "bmpc/types.hpp"

namespace bmpc {

/// Kinematic unicycle. State (px, py, heading, speed), inputs
/// (acceleration, yaw rate):
///   d/dt (px, py, psi, v) = (v cos psi, v sin psi, omega, a).
/// Discretized with explicit RK4; the step Jacobians are the analytic chain
/// rule through the integrator stages.
namespace unicycle {

constexpr int kStateDim = 4;
constexpr int kInputDim = 2;

inline VectorXd derivative(const VectorXd& x, const VectorXd& u) {
  VectorXd dx(kStateDim);
  dx << x(3) * std::cos(x(2)), x(3) * std::sin(x(2)), u(1), u(0);
  return dx;
}

inline void derivative_jacobians(const VectorXd& x, MatrixXd& Jx, MatrixXd& Ju) {
  Jx.setZero(kStateDim, kStateDim);
  Jx(0, 2) = -x(3) * std::sin(x(2));
  Jx(0, 3) = std::cos(x(2));
  Jx(1, 2) = x(3) * std::cos(x(2));
  Jx(1, 3) = std::sin(x(2));
  Ju.setZero(kStateDim, kInputDim);
  Ju(2, 1) = 1.0;
  Ju(3, 0) = 1.0;
}

inline VectorXd step(const VectorXd& x, const VectorXd& u, double dt) {
  const VectorXd k1 = derivative(x, u);
  const VectorXd k2 = derivative(x + 0.5 * dt * k1, u);
  const VectorXd k3 = derivative(x + 0.5 * dt * k2, u);
  const VectorXd k4 = derivative(x + dt * k3, u);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

inline void step_jacobians(const VectorXd& x, const VectorXd& u, double dt, MatrixXd& A,
                           MatrixXd& B) {
  const VectorXd k1 = derivative(x, u);
  const VectorXd x2 = x + 0.5 * dt * k1;
  const VectorXd k2 = derivative(x2, u);
  const VectorXd x3 = x + 0.5 * dt * k2;
  const VectorXd k3 = derivative(x3, u);
  const VectorXd x4 = x + dt * k3;

  MatrixXd J1x(kStateDim, kStateDim), J1u(kStateDim, kInputDim);
  MatrixXd J2x(kStateDim, kStateDim), J2u(kStateDim, kInputDim);
  MatrixXd J3x(kStateDim, kStateDim), J3u(kStateDim, kInputDim);
  MatrixXd J4x(kStateDim, kStateDim), J4u(kStateDim, kInputDim);
  derivative_jacobians(x, J1x, J1u);
  derivative_jacobians(x2, J2x, J2u);
  derivative_jacobians(x3, J3x, J3u);
  derivative_jacobians(x4, J4x, J4u);

  const MatrixXd I = MatrixXd::Identity(kStateDim, kStateDim);
  const MatrixXd dk1x = J1x;
  const MatrixXd dk2x = J2x * (I + 0.5 * dt * dk1x);
  const MatrixXd dk3x = J3x * (I + 0.5 * dt * dk2x);
  const MatrixXd dk4x = J4x * (I + dt * dk3x);
  const MatrixXd dk1u = J1u;
  const MatrixXd dk2u = J2x * (0.5 * dt * dk1u) + J2u;
  const MatrixXd dk3u = J3x * (0.5 * dt * dk2u) + J3u;
  const MatrixXd dk4u = J4x * (dt * dk3u) + J4u;

  A = I + dt / 6.0 * (dk1x + 2.0 * dk2x + 2.0 * dk3x + dk4x);
  B = dt / 6.0 * (dk1u + 2.0 * dk2u + 2.0 * dk3u + dk4u);
}

}  // namespace unicycle
}  // namespace bmpc
