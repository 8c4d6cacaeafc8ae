#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "bmpc/riccati.hpp"
#include "bmpc/scan.hpp"
#include "bmpc/tree.hpp"
#include "bmpc/types.hpp"

namespace bmpc {

/// Prediction of the stacked state sequence from the inputs and offsets:
///   x = Phi x_0 + S u + F c
/// with x in R^{(N+1)nx}, u in R^{N nu}, c in R^{N nx}. Block row 0 of Phi is
/// the identity; S and F are strictly block-lower-triangular in the first
/// block row.
struct PredictionMatrices {
  MatrixXd Phi;  // (N+1)nx x nx
  MatrixXd S;    // (N+1)nx x N nu
  MatrixXd F;    // (N+1)nx x N nx
  int horizon{0};
  int nx{0};
  int nu{0};
};

/// Builds the prediction matrices with scans over the dynamics matrices.
/// Phi rows come from one prefix scan of [A_0..A_{N-1}] under reversed
/// multiplication; each block row of F comes from an independent suffix scan,
/// so a data-parallel backend can process the rows concurrently. S scales the
/// block columns of F by the input matrices.
inline PredictionMatrices build_prediction(const std::vector<StageModel>& stages,
                                           ScanOrder order = ScanOrder::tree) {
  if (stages.empty()) throw std::invalid_argument("build_prediction: need at least one stage");
  const int N = static_cast<int>(stages.size());
  const int nx = stages[0].state_dim();
  const int nu = stages[0].input_dim();

  PredictionMatrices pm;
  pm.horizon = N;
  pm.nx = nx;
  pm.nu = nu;
  pm.Phi = MatrixXd::Zero((N + 1) * nx, nx);
  pm.S = MatrixXd::Zero((N + 1) * nx, N * nu);
  pm.F = MatrixXd::Zero((N + 1) * nx, N * nx);

  const auto rmul = [](const MatrixXd& a, const MatrixXd& b) -> MatrixXd { return b * a; };

  std::vector<MatrixXd> amats;
  amats.reserve(static_cast<size_t>(N));
  for (const StageModel& s : stages) amats.push_back(s.A);
  const auto phi_blocks = inclusive_prefix_scan(amats, rmul, order);

  pm.Phi.topRows(nx).setIdentity();
  for (int k = 1; k <= N; ++k) pm.Phi.middleRows(k * nx, nx) = phi_blocks[static_cast<size_t>(k) - 1];

  for (int i = 1; i <= N; ++i) {
    pm.F.block(i * nx, (i - 1) * nx, nx, nx).setIdentity();
    if (i >= 2) {
      std::vector<MatrixXd> row;  // [A_1, ..., A_{i-1}]
      row.reserve(static_cast<size_t>(i) - 1);
      for (int k = 1; k < i; ++k) row.push_back(stages[static_cast<size_t>(k)].A);
      const auto tails = inclusive_suffix_scan(row, rmul, order);  // tails[j] = A_{i-1}...A_{j+1}
      for (int j = 0; j + 1 < i; ++j) pm.F.block(i * nx, j * nx, nx, nx) = tails[static_cast<size_t>(j)];
    }
  }
  for (int j = 0; j < N; ++j) {
    pm.S.middleCols(j * nu, nu) = pm.F.middleCols(j * nx, nx) * stages[static_cast<size_t>(j)].B;
  }
  return pm;
}

/// Dense unconstrained QP over the stacked inputs: min 1/2 u'Hu + h'u.
struct CondensedQP {
  MatrixXd H;
  VectorXd h;
};

/// Condenses a path LQR problem:
///   H = S'QS + R + MS + (MS)'
///   h = S'q + (M + S'Q) F c + r + (M Phi + S'Q Phi) x0
/// with block-diagonal cost matrices (Q includes the terminal block; the last
/// block column of M is empty).
inline CondensedQP condense(const std::vector<StageModel>& stages, const ValueFunction& terminal,
                            const VectorXd& x0, ScanOrder order = ScanOrder::tree) {
  const PredictionMatrices pm = build_prediction(stages, order);
  const int N = pm.horizon;
  const int nx = pm.nx;
  const int nu = pm.nu;

  MatrixXd Qbar = MatrixXd::Zero((N + 1) * nx, (N + 1) * nx);
  MatrixXd Rbar = MatrixXd::Zero(N * nu, N * nu);
  MatrixXd Mbar = MatrixXd::Zero(N * nu, (N + 1) * nx);
  VectorXd qbar = VectorXd::Zero((N + 1) * nx);
  VectorXd rbar = VectorXd::Zero(N * nu);
  VectorXd cbar = VectorXd::Zero(N * nx);
  for (int k = 0; k < N; ++k) {
    const StageModel& s = stages[static_cast<size_t>(k)];
    Qbar.block(k * nx, k * nx, nx, nx) = s.Q;
    Rbar.block(k * nu, k * nu, nu, nu) = s.R;
    Mbar.block(k * nu, k * nx, nu, nx) = s.M;
    qbar.segment(k * nx, nx) = s.q;
    rbar.segment(k * nu, nu) = s.r;
    cbar.segment(k * nx, nx) = s.c;
  }
  Qbar.block(N * nx, N * nx, nx, nx) = terminal.P;
  qbar.segment(N * nx, nx) = terminal.p;

  CondensedQP qp;
  const MatrixXd MS = Mbar * pm.S;
  qp.H = pm.S.transpose() * Qbar * pm.S + Rbar + MS + MS.transpose();
  symmetrize(qp.H);
  const MatrixXd MplusStQ = Mbar + pm.S.transpose() * Qbar;
  qp.h = pm.S.transpose() * qbar + MplusStQ * (pm.F * cbar) + rbar + MplusStQ * (pm.Phi * x0);
  return qp;
}

/// Minimizer of the condensed QP, -H^-1 h. Tries a Cholesky factorization
/// first and falls back to pivoted LU; a residual above
/// 1e-9 (|H||u| + |h|) signals that regularization is needed upstream.
inline VectorXd solve_dense(const CondensedQP& qp) {
  VectorXd u;
  Eigen::LLT<MatrixXd> llt(qp.H);
  if (llt.info() == Eigen::Success) {
    u = llt.solve(-qp.h);
  } else {
    u = Eigen::PartialPivLU<MatrixXd>(qp.H).solve(-qp.h);
  }
  const double residual = (qp.H * u + qp.h).norm();
  const double bound = 1e-9 * (qp.H.norm() * u.norm() + qp.h.norm());
  if (!all_finite(u) || residual > bound) {
    throw FactorizationError("solve_dense: H not positive definite (residual " +
                             std::to_string(residual) + ")");
  }
  return u;
}

/// Sharing map between stacked per-path inputs and deduplicated tree inputs.
/// Read as the matrix G with one row per stacked slot and one column per tree
/// slot, G[(path p, step k), t] = 1 iff the node of path p at step k owns
/// tree slot t: stacked = G tree, and G' aggregates path quantities onto the
/// tree. Stored sparsely as index maps.
struct SharingMap {
  int nu{0};
  int slot_count{0};                        // distinct tree input slots
  std::vector<int> slot_of_node;            // node -> slot, -1 when the node owns none
  std::vector<int> node_of_slot;            // slot -> node
  std::vector<std::vector<int>> path_slots; // per path, per step 0..boundary-1: tree slot

  int tree_dim() const { return slot_count * nu; }
  int stacked_dim() const {
    return path_slots.empty() ? 0 : static_cast<int>(path_slots.size() * path_slots[0].size()) * nu;
  }

  /// stacked = G tree.
  VectorXd expand(const VectorXd& tree) const {
    VectorXd stacked(stacked_dim());
    int row = 0;
    for (const auto& slots : path_slots) {
      for (int slot : slots) {
        stacked.segment(row, nu) = tree.segment(slot * nu, nu);
        row += nu;
      }
    }
    return stacked;
  }

  /// tree = G' stacked.
  VectorXd aggregate(const VectorXd& stacked) const {
    VectorXd tree = VectorXd::Zero(tree_dim());
    int row = 0;
    for (const auto& slots : path_slots) {
      for (int slot : slots) {
        tree.segment(slot * nu, nu) += stacked.segment(row, nu);
        row += nu;
      }
    }
    return tree;
  }

  /// G'1 per slot: the number of paths through each tree input slot.
  std::vector<int> slot_multiplicity() const {
    std::vector<int> mult(static_cast<size_t>(slot_count), 0);
    for (const auto& slots : path_slots) {
      for (int slot : slots) ++mult[static_cast<size_t>(slot)];
    }
    return mult;
  }
};

struct TreeCondensed {
  CondensedQP qp;      // over the deduplicated tree inputs
  SharingMap gamma;
  std::vector<CondensedQP> per_path;  // H^i, h^i before aggregation
};

/// Condenses the tree segment spanning steps 0..boundary_step-1 against the
/// value functions given at the boundary nodes. The tree is flattened into
/// one truncated path per boundary node; each path is condensed
/// independently, with shared-node costs divided by the number of paths
/// through the node so that the aggregation
///   H_tree = G' diag(H^i) G,  h_tree = G' stack(h^i)
/// reconstitutes every node cost exactly once.
inline TreeCondensed condense_tree(const TreeStageModels& models, const VectorXd& x0,
                                   int boundary_step, const std::vector<ValueFunction>& boundary_values,
                                   ScanOrder order = ScanOrder::tree) {
  const TreeTopology& tree = models.topology;
  if (boundary_step < 1 || boundary_step > tree.horizon) {
    throw std::invalid_argument("condense_tree: boundary step outside [1, horizon]");
  }
  const int nu = models.stage[0].input_dim();

  // Truncated root-to-boundary paths, one per boundary node.
  std::vector<std::vector<int>> paths;
  for (int b = tree.nodes_at_step_begin(boundary_step); b < tree.nodes_at_step_end(boundary_step); ++b) {
    std::vector<int> nodes;
    for (int i = b; i >= 0; i = tree.parent[static_cast<size_t>(i)]) nodes.push_back(i);
    std::reverse(nodes.begin(), nodes.end());
    paths.push_back(std::move(nodes));
  }

  std::vector<int> multiplicity(static_cast<size_t>(tree.node_count), 0);
  for (const auto& nodes : paths) {
    for (int k = 0; k < boundary_step; ++k) ++multiplicity[static_cast<size_t>(nodes[static_cast<size_t>(k)])];
  }

  TreeCondensed out;
  SharingMap& gamma = out.gamma;
  gamma.nu = nu;
  gamma.slot_of_node.assign(static_cast<size_t>(tree.node_count), -1);
  for (int i = 0; i < tree.nodes_at_step_begin(boundary_step); ++i) {
    gamma.slot_of_node[static_cast<size_t>(i)] = gamma.slot_count++;
    gamma.node_of_slot.push_back(i);
  }
  for (const auto& nodes : paths) {
    std::vector<int> slots(static_cast<size_t>(boundary_step));
    for (int k = 0; k < boundary_step; ++k) {
      slots[static_cast<size_t>(k)] = gamma.slot_of_node[static_cast<size_t>(nodes[static_cast<size_t>(k)])];
    }
    gamma.path_slots.push_back(std::move(slots));
  }

  // Independent per-path condensation with multiplicity-scaled costs.
  for (const auto& nodes : paths) {
    std::vector<StageModel> stages(static_cast<size_t>(boundary_step));
    for (int k = 0; k < boundary_step; ++k) {
      const int node = nodes[static_cast<size_t>(k)];
      StageModel s = models.stage[static_cast<size_t>(node)];
      const double scale = 1.0 / multiplicity[static_cast<size_t>(node)];
      s.Q *= scale;
      s.R *= scale;
      s.M *= scale;
      s.q *= scale;
      s.r *= scale;
      s.c = models.defect[static_cast<size_t>(nodes[static_cast<size_t>(k) + 1])];
      stages[static_cast<size_t>(k)] = std::move(s);
    }
    const ValueFunction& terminal = boundary_values[static_cast<size_t>(nodes[static_cast<size_t>(boundary_step)])];
    out.per_path.push_back(condense(stages, terminal, x0, order));
  }

  // H_tree = G' diag(H^i) G and h_tree = G' stack(h^i), accumulated sparsely.
  out.qp.H = MatrixXd::Zero(gamma.tree_dim(), gamma.tree_dim());
  out.qp.h = VectorXd::Zero(gamma.tree_dim());
  for (size_t p = 0; p < paths.size(); ++p) {
    const auto& slots = gamma.path_slots[p];
    const CondensedQP& pq = out.per_path[p];
    for (int k1 = 0; k1 < boundary_step; ++k1) {
      out.qp.h.segment(slots[static_cast<size_t>(k1)] * nu, nu) += pq.h.segment(k1 * nu, nu);
      for (int k2 = 0; k2 < boundary_step; ++k2) {
        out.qp.H.block(slots[static_cast<size_t>(k1)] * nu, slots[static_cast<size_t>(k2)] * nu, nu, nu) +=
            pq.H.block(k1 * nu, k2 * nu, nu, nu);
      }
    }
  }
  symmetrize(out.qp.H);
  return out;
}

}  // namespace bmpc
