#pragma once

#include <string>
#include <vector>

#include "bmpc/tree.hpp"
#include "bmpc/types.hpp"

namespace bmpc {

namespace detail {

/// One Bellman step. P_next / p_next_shifted already aggregate the
/// continuation: for a single successor with offset c they are
/// (P_{k+1}, p_{k+1} + P_{k+1} c); for a branching node they are the sums
/// over children.
struct RiccatiStep {
  ValueFunction value;
  FeedbackPolicy policy;
};

inline RiccatiStep riccati_step(const StageModel& s, const MatrixXd& P_next,
                                const VectorXd& p_next_shifted, int step_index = -1) {
  MatrixXd Qxx = s.Q + s.A.transpose() * P_next * s.A;
  MatrixXd Quu = s.R + s.B.transpose() * P_next * s.B;
  const MatrixXd Qux = s.M + s.B.transpose() * P_next * s.A;
  const VectorXd qx = s.q + s.A.transpose() * p_next_shifted;
  const VectorXd qu = s.r + s.B.transpose() * p_next_shifted;
  symmetrize(Quu);

  Eigen::LDLT<MatrixXd> fac(Quu);
  if (fac.info() != Eigen::Success || (fac.vectorD().array() <= 0.0).any()) {
    throw IndefiniteHessianError("riccati_step: R + B'PB not positive definite at step " +
                                 std::to_string(step_index));
  }
  RiccatiStep out;
  out.policy.K = -fac.solve(Qux);
  out.policy.k = -fac.solve(qu);
  out.value.P = Qxx + Qux.transpose() * out.policy.K;
  out.value.p = qx + Qux.transpose() * out.policy.k;
  symmetrize(out.value.P);
  return out;
}

}  // namespace detail

/// Sequential backward Riccati recursion for a single path. Returns the value
/// functions V_0..V_N and the policies K_0..K_{N-1}. Serves as the oracle for
/// the scan-based backward pass and as the sequential baseline.
struct RiccatiPathResult {
  std::vector<ValueFunction> values;
  std::vector<FeedbackPolicy> policies;
};

inline RiccatiPathResult riccati_path(const std::vector<StageModel>& stages,
                                      const ValueFunction& terminal) {
  const int N = static_cast<int>(stages.size());
  RiccatiPathResult out;
  out.values.resize(static_cast<size_t>(N) + 1);
  out.policies.resize(static_cast<size_t>(N));
  out.values[static_cast<size_t>(N)] = terminal;
  for (int k = N - 1; k >= 0; --k) {
    const StageModel& s = stages[static_cast<size_t>(k)];
    const ValueFunction& next = out.values[static_cast<size_t>(k) + 1];
    const VectorXd p_shifted = next.p + next.P * s.c;
    auto step = detail::riccati_step(s, next.P, p_shifted, k);
    out.values[static_cast<size_t>(k)] = std::move(step.value);
    out.policies[static_cast<size_t>(k)] = std::move(step.policy);
  }
  return out;
}

/// LQR-Tree data: per-node linearized stage (A, B and weight-scaled cost) for
/// non-leaves, per-leaf weight-scaled terminal cost, and per-node dynamics
/// offsets. The offset of node i applies on the edge p(i) -> i, so branch
/// siblings can carry distinct defects; StageModel::c is ignored here.
struct TreeStageModels {
  TreeTopology topology;
  std::vector<StageModel> stage;        // valid for non-leaf nodes
  std::vector<VectorXd> defect;         // valid for non-root nodes
  std::vector<ValueFunction> leaf_cost; // valid for leaf nodes

  int state_dim() const { return static_cast<int>(defect.size() > 1 ? defect[1].size() : 0); }
};

struct TreeBackwardResult {
  std::vector<ValueFunction> value;    // per node
  std::vector<FeedbackPolicy> policy;  // per non-leaf node
};

/// Riccati recursion over the subtree spanning steps 0..boundary_step, with
/// the value functions at the boundary nodes given. At a branching node the
/// continuation is the sum of the children's value functions propagated
/// through the shared dynamics; the children's weights already scale their
/// costs, so the plain sum realizes the expectation. Children are summed in
/// index order.
inline TreeBackwardResult riccati_tree_from(const TreeStageModels& models, int boundary_step,
                                            const std::vector<ValueFunction>& boundary_values) {
  const TreeTopology& tree = models.topology;
  TreeBackwardResult out;
  out.value.resize(static_cast<size_t>(tree.node_count));
  out.policy.resize(static_cast<size_t>(tree.node_count));

  for (int i = tree.nodes_at_step_begin(boundary_step); i < tree.nodes_at_step_end(boundary_step); ++i) {
    out.value[static_cast<size_t>(i)] = boundary_values[static_cast<size_t>(i)];
  }
  for (int i = tree.nodes_at_step_begin(boundary_step) - 1; i >= 0; --i) {
    const StageModel& s = models.stage[static_cast<size_t>(i)];
    const int nx = s.state_dim();
    MatrixXd P_next = MatrixXd::Zero(nx, nx);
    VectorXd p_shifted = VectorXd::Zero(nx);
    for (int ch : tree.children[static_cast<size_t>(i)]) {
      const ValueFunction& v = out.value[static_cast<size_t>(ch)];
      P_next += v.P;
      p_shifted += v.p + v.P * models.defect[static_cast<size_t>(ch)];
    }
    auto step = detail::riccati_step(s, P_next, p_shifted, tree.time_step[static_cast<size_t>(i)]);
    out.value[static_cast<size_t>(i)] = std::move(step.value);
    out.policy[static_cast<size_t>(i)] = std::move(step.policy);
  }
  return out;
}

/// Full-tree Riccati recursion, sweeping from the leaves to the root. On a
/// path graph this is arithmetically identical to riccati_path.
inline TreeBackwardResult riccati_tree(const TreeStageModels& models) {
  return riccati_tree_from(models, models.topology.horizon, models.leaf_cost);
}

}  // namespace bmpc
