#pragma once

#include <string>
#include <vector>

#include "bmpc/scan.hpp"
#include "bmpc/types.hpp"

namespace bmpc {

/// Parameters of the dual conditional value function
///   V_{k->i}(x_k, x_i) = max_l  1/2 x_k'P x_k + p'x_k - 1/2 l'C l + l'(x_i - A x_k - c)
/// for the fixed-end LQR segment from step k to step i. These tuples form the
/// associative elements of the backward scan.
struct ScanElementBwd {
  MatrixXd P;  // nx x nx, symmetric PSD
  VectorXd p;  // nx
  MatrixXd C;  // nx x nx, symmetric PSD
  MatrixXd A;  // nx x nx
  VectorXd c;  // nx
  // Step span [begin, end] covered by this element, kept for diagnostics.
  int span_begin{-1};
  int span_end{-1};
};

/// One-step element V_{k->k+1} of the backward scan.
/// Requires R symmetric positive definite.
inline ScanElementBwd init_bwd_element(const StageModel& stage, int stage_index = -1) {
  Eigen::LDLT<MatrixXd> Rfac(stage.R);
  if (Rfac.info() != Eigen::Success || (Rfac.vectorD().array() <= 0.0).any()) {
    throw FactorizationError("init_bwd_element: R not positive definite at stage " +
                             std::to_string(stage_index));
  }
  const MatrixXd RiMt = Rfac.solve(stage.M);              // R^-1 M
  const MatrixXd RiBt = Rfac.solve(stage.B.transpose());  // R^-1 B'
  const VectorXd Rir = Rfac.solve(stage.r);

  ScanElementBwd e;
  e.P = stage.Q - stage.M.transpose() * RiMt;
  e.p = stage.q - stage.M.transpose() * Rir;
  e.C = stage.B * RiBt;
  e.A = stage.A - stage.B * RiMt;
  e.c = stage.c - stage.B * Rir;
  symmetrize(e.P);
  symmetrize(e.C);
  e.span_begin = stage_index;
  e.span_end = stage_index >= 0 ? stage_index + 1 : -1;
  return e;
}

/// Embeds a value function as a scan element. Combining any element with an
/// embedded value on the right yields the embedded form again, with (P, p)
/// equal to the propagated value function; the suffix scan therefore carries
/// the terminal cost through the whole horizon.
inline ScanElementBwd embed_terminal(const ValueFunction& terminal, int step = -1) {
  const int nx = static_cast<int>(terminal.P.rows());
  ScanElementBwd e;
  e.P = terminal.P;
  e.p = terminal.p;
  e.C = MatrixXd::Zero(nx, nx);
  e.A = MatrixXd::Zero(nx, nx);
  e.c = VectorXd::Zero(nx);
  e.span_begin = step;
  e.span_end = step;
  return e;
}

/// Combination rule for two adjacent segments, first = k->j, second = j->i:
///   A_{k,i} = A_{j,i} (I + C_{k,j} P_{j,i})^-1 A_{k,j}
///   c_{k,i} = A_{j,i} (I + C_{k,j} P_{j,i})^-1 (c_{k,j} - C_{k,j} p_{j,i}) + c_{j,i}
///   C_{k,i} = A_{j,i} (I + C_{k,j} P_{j,i})^-1 C_{k,j} A_{j,i}' + C_{j,i}
///   p_{k,i} = A_{k,j}' (I + P_{j,i} C_{k,j})^-1 (p_{j,i} + P_{j,i} c_{k,j}) + p_{k,j}
///   P_{k,i} = A_{k,j}' (I + P_{j,i} C_{k,j})^-1 P_{j,i} A_{k,j} + P_{k,j}
/// The signs of A and c keep the output in the same primal parameterization
/// as the one-step elements, which makes the rule associative; flipping them
/// leaves P and C untouched (A enters both quadratically) but corrupts the
/// linear terms over chained combinations.
/// (I + P C)^-1 is the transpose of (I + C P)^-1, so a single LU
/// factorization serves all five formulas. P and C are symmetrized.
inline ScanElementBwd combine_bwd(const ScanElementBwd& first, const ScanElementBwd& second) {
  const auto nx = first.P.rows();
  MatrixXd G = MatrixXd::Identity(nx, nx);
  G.noalias() += first.C * second.P;  // I + C_{k,j} P_{j,i}
  Eigen::PartialPivLU<MatrixXd> lu(G);

  const MatrixXd iG_A = lu.solve(first.A);
  const MatrixXd iG_C = lu.solve(first.C);
  const VectorXd iG_v = lu.solve(VectorXd(first.c - first.C * second.p));
  const MatrixXd iGt_PA = lu.transpose().solve(MatrixXd(second.P * first.A));
  const VectorXd iGt_w = lu.transpose().solve(VectorXd(second.p + second.P * first.c));

  ScanElementBwd out;
  out.A = second.A * iG_A;
  out.c = second.A * iG_v + second.c;
  out.C = second.A * iG_C * second.A.transpose() + second.C;
  out.p = first.A.transpose() * iGt_w + first.p;
  out.P = first.A.transpose() * iGt_PA + first.P;
  symmetrize(out.C);
  symmetrize(out.P);
  out.span_begin = first.span_begin;
  out.span_end = second.span_end;

  if (!(all_finite(out.P) && all_finite(out.p) && all_finite(out.C) && all_finite(out.A) &&
        all_finite(out.c))) {
    throw FactorizationError("combine_bwd: singular (I + C P) combining spans [" +
                             std::to_string(first.span_begin) + "," + std::to_string(first.span_end) +
                             "] and [" + std::to_string(second.span_begin) + "," +
                             std::to_string(second.span_end) + "]");
  }
  return out;
}

/// V_k = V_{k->i} (+) V_i, minimizing over the linking state x_i. Implemented
/// by embedding V_i as a scan element and reading (P, p) of the combination.
inline ValueFunction combine_with_terminal(const ScanElementBwd& elem, const ValueFunction& terminal) {
  const ScanElementBwd combined = combine_bwd(elem, embed_terminal(terminal, elem.span_end));
  return {combined.P, combined.p};
}

/// Solves the backward pass of the LQR problem as an inclusive suffix scan of
/// the one-step elements with the terminal cost appended. Returns the value
/// functions V_0..V_N; V_N equals the terminal cost.
inline std::vector<ValueFunction> backward_scan(const std::vector<StageModel>& stages,
                                                const ValueFunction& terminal,
                                                ScanOrder order = ScanOrder::tree) {
  if (stages.empty()) throw std::invalid_argument("backward_scan: need at least one stage");
  const int N = static_cast<int>(stages.size());
  std::vector<ScanElementBwd> elems;
  elems.reserve(static_cast<size_t>(N) + 1);
  for (int k = 0; k < N; ++k) elems.push_back(init_bwd_element(stages[static_cast<size_t>(k)], k));
  elems.push_back(embed_terminal(terminal, N));

  const auto scanned = inclusive_suffix_scan(
      std::move(elems), [](const ScanElementBwd& a, const ScanElementBwd& b) { return combine_bwd(a, b); },
      order);

  std::vector<ValueFunction> values;
  values.reserve(scanned.size());
  for (const ScanElementBwd& e : scanned) values.push_back({e.P, e.p});
  return values;
}

/// Affine control law at step k from the value function at step k+1:
///   K = -(R + B'PB)^-1 (M + B'PA),  k = -(R + B'PB)^-1 (r + B'(p + Pc)).
/// Independent per stage once the values are known.
inline FeedbackPolicy feedback_from_values(const StageModel& stage, const ValueFunction& next_value) {
  MatrixXd Huu = stage.R + stage.B.transpose() * next_value.P * stage.B;
  symmetrize(Huu);
  Eigen::LDLT<MatrixXd> fac(Huu);
  if (fac.info() != Eigen::Success || (fac.vectorD().array() <= 0.0).any()) {
    throw IndefiniteHessianError("feedback_from_values: R + B'PB not positive definite");
  }
  FeedbackPolicy policy;
  policy.K = -fac.solve(MatrixXd(stage.M + stage.B.transpose() * next_value.P * stage.A));
  policy.k = -fac.solve(VectorXd(stage.r + stage.B.transpose() * (next_value.p + next_value.P * stage.c)));
  return policy;
}

/// Closed-loop affine map x+ = A x + c over one or more steps.
struct ScanElementFwd {
  MatrixXd A;
  VectorXd c;
};

/// One-step closed-loop map A + BK, c + Bk.
inline ScanElementFwd init_fwd_element(const StageModel& stage, const FeedbackPolicy& policy) {
  return {stage.A + stage.B * policy.K, stage.c + stage.B * policy.k};
}

/// Composition of affine maps, first = k->j, second = j->i.
inline ScanElementFwd combine_fwd(const ScanElementFwd& first, const ScanElementFwd& second) {
  return {second.A * first.A, second.A * first.c + second.c};
}

/// Rolls out the closed loop by an inclusive prefix scan of the one-step maps
/// and evaluates each scanned map at x0. Returns x_1..x_N.
inline std::vector<VectorXd> forward_scan(const std::vector<ScanElementFwd>& elements,
                                          const VectorXd& x0, ScanOrder order = ScanOrder::tree) {
  if (elements.empty()) throw std::invalid_argument("forward_scan: need at least one element");
  const auto scanned = inclusive_prefix_scan(
      elements, [](const ScanElementFwd& a, const ScanElementFwd& b) { return combine_fwd(a, b); },
      order);
  std::vector<VectorXd> states;
  states.reserve(scanned.size());
  for (const ScanElementFwd& e : scanned) states.push_back(e.A * x0 + e.c);
  return states;
}

}  // namespace bmpc
