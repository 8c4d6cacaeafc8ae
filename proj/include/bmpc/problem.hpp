#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmpc/tree.hpp"
#include "bmpc/types.hpp"

namespace bmpc {

/// Nonlinear dynamics x+ = f(x, u) with Jacobians, attached to a non-leaf node.
struct NodeDynamics {
  std::function<VectorXd(const VectorXd&, const VectorXd&)> value;
  std::function<void(const VectorXd&, const VectorXd&, MatrixXd& A, MatrixXd& B)> jacobians;
};

/// Stage cost l(x, u) with gradients and (Gauss-Newton) Hessian blocks.
struct NodeCost {
  std::function<double(const VectorXd&, const VectorXd&)> value;
  std::function<void(const VectorXd&, const VectorXd&, MatrixXd& Q, MatrixXd& R, MatrixXd& M,
                     VectorXd& q, VectorXd& r)>
      quadratic;
};

/// Terminal cost l_f(x) on a leaf node.
struct NodeTerminalCost {
  std::function<double(const VectorXd&)> value;
  std::function<void(const VectorXd&, MatrixXd& Q, VectorXd& q)> quadratic;
};

/// Inequality constraints g(x, u) <= 0 attached to a node. Leaf constraints
/// depend on the state only; their input Jacobian is never used.
struct NodeConstraint {
  int dim{0};
  std::function<VectorXd(const VectorXd&, const VectorXd&)> value;
  std::function<void(const VectorXd&, const VectorXd&, MatrixXd& Jx, MatrixXd& Ju)> jacobians;
};

/// A branch MPC problem: tree-indexed dynamics, costs, and inequality
/// constraints, plus the measured initial state.
struct BmpcProblem {
  TreeTopology tree;
  int state_dim{0};
  int input_dim{0};
  VectorXd initial_state;
  std::vector<NodeDynamics> dynamics;            // per non-leaf node
  std::vector<NodeCost> cost;                    // per non-leaf node
  std::vector<NodeTerminalCost> terminal_cost;   // per leaf node
  std::vector<NodeConstraint> constraint;        // per node; dim 0 when absent

  int constraint_dim(int node) const {
    return constraint.empty() ? 0 : constraint[static_cast<size_t>(node)].dim;
  }
  bool has_constraints() const {
    for (const auto& c : constraint) {
      if (c.dim > 0) return true;
    }
    return false;
  }
};

/// Estimated multipliers and penalty of the augmented-Lagrangian relaxation.
struct ALState {
  std::vector<VectorXd> multiplier;  // per node, elementwise >= 0
  double penalty{0.0};

  static ALState Zero(const BmpcProblem& problem, double rho) {
    ALState al;
    al.penalty = rho;
    al.multiplier.resize(static_cast<size_t>(problem.tree.node_count));
    for (int i = 0; i < problem.tree.node_count; ++i) {
      al.multiplier[static_cast<size_t>(i)] = VectorXd::Zero(problem.constraint_dim(i));
    }
    return al;
  }
};

namespace detail {

/// Active-set penalty of one node: (eta + 1/2 I_rho g)' g with
/// I_rho,mm = rho when g_m >= 0 or eta_m > 0, else 0.
inline double al_penalty(const VectorXd& g, const VectorXd& eta, double rho) {
  double value = 0.0;
  for (int m = 0; m < g.size(); ++m) {
    if (g(m) >= 0.0 || eta(m) > 0.0) {
      value += eta(m) * g(m) + 0.5 * rho * g(m) * g(m);
    }
  }
  return value;
}

}  // namespace detail

/// Exact per-trajectory quantities shared by the merit function, the line
/// search, and the outer loop.
struct ProblemEval {
  double cost{0.0};     // weighted objective
  double cost_al{0.0};  // weighted objective plus AL penalty terms
  std::vector<VectorXd> defect;  // per node; defect[i] = f_{p(i)}(x_p, u_p) - x_i
  double defect_l1{0.0};
  double max_violation{0.0};
  std::vector<VectorXd> constraint_value;  // per node
  bool finite{true};
};

inline ProblemEval evaluate(const BmpcProblem& problem, const TrajectoryTree& traj,
                            const ALState& al) {
  const TreeTopology& tree = problem.tree;
  ProblemEval ev;
  ev.defect.resize(static_cast<size_t>(tree.node_count));
  ev.constraint_value.resize(static_cast<size_t>(tree.node_count));
  for (int i = 0; i < tree.node_count; ++i) {
    const double w = tree.weight[static_cast<size_t>(i)];
    const VectorXd& x = traj.state[static_cast<size_t>(i)];
    double node_cost;
    if (tree.is_leaf(i)) {
      node_cost = problem.terminal_cost[static_cast<size_t>(i)].value(x);
    } else {
      node_cost = problem.cost[static_cast<size_t>(i)].value(x, traj.input[static_cast<size_t>(i)]);
    }
    ev.cost += w * node_cost;
    double penalty = 0.0;
    if (problem.constraint_dim(i) > 0) {
      const auto& con = problem.constraint[static_cast<size_t>(i)];
      const VectorXd g = con.value(x, traj.input[static_cast<size_t>(i)]);
      ev.constraint_value[static_cast<size_t>(i)] = g;
      penalty = detail::al_penalty(g, al.multiplier[static_cast<size_t>(i)], al.penalty);
      ev.max_violation = std::max(ev.max_violation, g.size() > 0 ? g.maxCoeff() : 0.0);
    }
    ev.cost_al += w * (node_cost + penalty);
  }
  ev.max_violation = std::max(ev.max_violation, 0.0);
  for (int i = 1; i < tree.node_count; ++i) {
    const int p = tree.parent[static_cast<size_t>(i)];
    ev.defect[static_cast<size_t>(i)] =
        problem.dynamics[static_cast<size_t>(p)].value(traj.state[static_cast<size_t>(p)],
                                                       traj.input[static_cast<size_t>(p)]) -
        traj.state[static_cast<size_t>(i)];
    ev.defect_l1 += ev.defect[static_cast<size_t>(i)].lpNorm<1>();
  }
  ev.finite = std::isfinite(ev.cost_al) && std::isfinite(ev.defect_l1);
  return ev;
}

/// Propagates the exact nonlinear dynamics down the tree with the given input
/// tree; the resulting trajectory has zero defects by construction.
inline TrajectoryTree nonlinear_rollout(const BmpcProblem& problem,
                                        const std::vector<VectorXd>& inputs, const VectorXd& x0) {
  const TreeTopology& tree = problem.tree;
  TrajectoryTree traj = TrajectoryTree::Zero(tree, problem.state_dim, problem.input_dim);
  traj.state[0] = x0;
  for (int i = 0; i < tree.node_count; ++i) {
    if (tree.is_leaf(i)) continue;
    traj.input[static_cast<size_t>(i)] = inputs[static_cast<size_t>(i)];
    const VectorXd next = problem.dynamics[static_cast<size_t>(i)].value(
        traj.state[static_cast<size_t>(i)], traj.input[static_cast<size_t>(i)]);
    if (!all_finite(next)) {
      throw std::runtime_error("nonlinear_rollout: non-finite state at node " + std::to_string(i));
    }
    for (int ch : tree.children[static_cast<size_t>(i)]) traj.state[static_cast<size_t>(ch)] = next;
  }
  return traj;
}

/// Nonlinear rollout under affine policies around a nominal trajectory:
/// u_i = u_nom_i + K_i (x_i - x_nom_i) + alpha k_i.
inline TrajectoryTree nonlinear_rollout(const BmpcProblem& problem, const TrajectoryTree& nominal,
                                        const std::vector<FeedbackPolicy>& policies, double alpha,
                                        const VectorXd& x0) {
  const TreeTopology& tree = problem.tree;
  TrajectoryTree traj = TrajectoryTree::Zero(tree, problem.state_dim, problem.input_dim);
  traj.state[0] = x0;
  for (int i = 0; i < tree.node_count; ++i) {
    if (tree.is_leaf(i)) continue;
    traj.input[static_cast<size_t>(i)] =
        nominal.input[static_cast<size_t>(i)] +
        policies[static_cast<size_t>(i)].K *
            (traj.state[static_cast<size_t>(i)] - nominal.state[static_cast<size_t>(i)]) +
        alpha * policies[static_cast<size_t>(i)].k;
    const VectorXd next = problem.dynamics[static_cast<size_t>(i)].value(
        traj.state[static_cast<size_t>(i)], traj.input[static_cast<size_t>(i)]);
    if (!all_finite(next)) {
      throw std::runtime_error("nonlinear_rollout: non-finite state at node " + std::to_string(i));
    }
    for (int ch : tree.children[static_cast<size_t>(i)]) traj.state[static_cast<size_t>(ch)] = next;
  }
  return traj;
}

/// Quadratic tracking cost 1/2 (x-ref)'Wx(x-ref) + 1/2 u'Wu u.
inline NodeCost tracking_cost(const VectorXd& ref, const MatrixXd& Wx, const MatrixXd& Wu) {
  NodeCost cost;
  cost.value = [ref, Wx, Wu](const VectorXd& x, const VectorXd& u) {
    const VectorXd e = x - ref;
    return 0.5 * e.dot(Wx * e) + 0.5 * u.dot(Wu * u);
  };
  cost.quadratic = [ref, Wx, Wu](const VectorXd& x, const VectorXd& u, MatrixXd& Q, MatrixXd& R,
                                 MatrixXd& M, VectorXd& q, VectorXd& r) {
    Q = Wx;
    R = Wu;
    M = MatrixXd::Zero(Wu.rows(), Wx.rows());
    q = Wx * (x - ref);
    r = Wu * u;
  };
  return cost;
}

inline NodeTerminalCost tracking_terminal_cost(const VectorXd& ref, const MatrixXd& Wf) {
  NodeTerminalCost cost;
  cost.value = [ref, Wf](const VectorXd& x) {
    const VectorXd e = x - ref;
    return 0.5 * e.dot(Wf * e);
  };
  cost.quadratic = [ref, Wf](const VectorXd& x, MatrixXd& Q, VectorXd& q) {
    Q = Wf;
    q = Wf * (x - ref);
  };
  return cost;
}

}  // namespace bmpc
