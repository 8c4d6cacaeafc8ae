#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <string>
#include <vector>

#include "bmpc/condensed.hpp"
#include "bmpc/lqr_scan.hpp"
#include "bmpc/problem.hpp"
#include "bmpc/riccati.hpp"
#include "bmpc/scan.hpp"
#include "bmpc/tree.hpp"
#include "bmpc/types.hpp"

namespace bmpc {

/// Backward-pass strategy. The scan variants split at the last branching
/// step: the per-branch tails are solved by parallel scans, the shared
/// segment either by the tree Riccati recursion or by condensing.
enum class BackwardStrategy { scan_tree_riccati, scan_condensed, sequential_riccati };
enum class ForwardMode { linear_rollout, nonlinear_rollout };
enum class LineSearchMode { parallel, sequential };

struct SolverOptions {
  BackwardStrategy backward{BackwardStrategy::scan_tree_riccati};
  ForwardMode forward{ForwardMode::linear_rollout};
  LineSearchMode line_search{LineSearchMode::parallel};
  ScanOrder scan_order{ScanOrder::tree};
  bool parallel{true};

  int max_inner_iterations{100};
  int max_outer_iterations{10};
  int alpha_levels{11};  // grid {1, 1/2, ..., 2^-(levels-1)}
  double armijo_beta{1e-4};
  double merit_gamma{0.5};
  double merit_mu0{1.0};
  double merit_mu_init{1.0};
  double defect_epsilon{1e-8};

  double tol_defect{1e-8};
  double tol_cost{1e-8};
  double tol_feedforward{1e-6};
  double tol_constraint{1e-4};

  double penalty_init{10.0};
  double penalty_growth{10.0};
  double penalty_max{1e8};

  double reg_init{0.0};
  double reg_min{1e-6};
  double reg_growth{10.0};
  double reg_decay{10.0};
  double reg_max{1e10};
};

/// Gradients and Gauss-Newton Hessians of the augmented-Lagrangian objective
/// around the nominal trajectory tree, weight-scaled per node, plus the
/// dynamics linearization and multiple-shooting defects. Constraint curvature
/// enters as J' I_rho J only (no second derivatives of g); I_rho selects the
/// active constraints (g >= 0 or eta > 0).
inline TreeStageModels linearize(const BmpcProblem& problem, const TrajectoryTree& nominal,
                                 const ALState& al) {
  const TreeTopology& tree = problem.tree;
  const int nx = problem.state_dim;
  const int nu = problem.input_dim;
  TreeStageModels models;
  models.topology = tree;
  models.stage.resize(static_cast<size_t>(tree.node_count));
  models.defect.resize(static_cast<size_t>(tree.node_count));
  models.leaf_cost.resize(static_cast<size_t>(tree.node_count));

  for (int i = 0; i < tree.node_count; ++i) {
    const double w = tree.weight[static_cast<size_t>(i)];
    const VectorXd& x = nominal.state[static_cast<size_t>(i)];
    const int nc = problem.constraint_dim(i);
    VectorXd g;
    MatrixXd Jx, Ju;
    VectorXd active_scale;  // I_rho diagonal
    if (nc > 0) {
      const auto& con = problem.constraint[static_cast<size_t>(i)];
      g = con.value(x, nominal.input[static_cast<size_t>(i)]);
      Jx.resize(nc, nx);
      Ju.resize(nc, nu);
      con.jacobians(x, nominal.input[static_cast<size_t>(i)], Jx, Ju);
      active_scale.resize(nc);
      const VectorXd& eta = al.multiplier[static_cast<size_t>(i)];
      for (int m = 0; m < nc; ++m) {
        active_scale(m) = (g(m) >= 0.0 || eta(m) > 0.0) ? al.penalty : 0.0;
      }
    }

    if (tree.is_leaf(i)) {
      MatrixXd Q;
      VectorXd q;
      problem.terminal_cost[static_cast<size_t>(i)].quadratic(x, Q, q);
      if (nc > 0) {
        const VectorXd lam = al.multiplier[static_cast<size_t>(i)] + active_scale.asDiagonal() * g;
        q += Jx.transpose() * lam;
        Q += Jx.transpose() * active_scale.asDiagonal() * Jx;
      }
      models.leaf_cost[static_cast<size_t>(i)] = {w * Q, w * q};
      if (!all_finite(models.leaf_cost[static_cast<size_t>(i)].P) ||
          !all_finite(models.leaf_cost[static_cast<size_t>(i)].p)) {
        throw std::runtime_error("linearize: non-finite terminal expansion at node " + std::to_string(i));
      }
    } else {
      const VectorXd& u = nominal.input[static_cast<size_t>(i)];
      StageModel s;
      s.A.resize(nx, nx);
      s.B.resize(nx, nu);
      problem.dynamics[static_cast<size_t>(i)].jacobians(x, u, s.A, s.B);
      problem.cost[static_cast<size_t>(i)].quadratic(x, u, s.Q, s.R, s.M, s.q, s.r);
      if (nc > 0) {
        const VectorXd lam = al.multiplier[static_cast<size_t>(i)] + active_scale.asDiagonal() * g;
        s.q += Jx.transpose() * lam;
        s.r += Ju.transpose() * lam;
        s.Q += Jx.transpose() * active_scale.asDiagonal() * Jx;
        s.R += Ju.transpose() * active_scale.asDiagonal() * Ju;
        s.M += Ju.transpose() * active_scale.asDiagonal() * Jx;
      }
      s.Q *= w;
      s.R *= w;
      s.M *= w;
      s.q *= w;
      s.r *= w;
      s.c = VectorXd::Zero(nx);  // per-child offsets live in models.defect
      if (!all_finite(s.A) || !all_finite(s.B) || !all_finite(s.Q) || !all_finite(s.R) ||
          !all_finite(s.q) || !all_finite(s.r)) {
        throw std::runtime_error("linearize: non-finite expansion at node " + std::to_string(i));
      }
      models.stage[static_cast<size_t>(i)] = std::move(s);
    }
  }
  for (int i = 1; i < tree.node_count; ++i) {
    const int p = tree.parent[static_cast<size_t>(i)];
    models.defect[static_cast<size_t>(i)] =
        problem.dynamics[static_cast<size_t>(p)].value(nominal.state[static_cast<size_t>(p)],
                                                       nominal.input[static_cast<size_t>(p)]) -
        nominal.state[static_cast<size_t>(i)];
    if (!all_finite(models.defect[static_cast<size_t>(i)])) {
      throw std::runtime_error("linearize: non-finite defect at node " + std::to_string(i));
    }
  }
  return models;
}

struct BackwardPassResult {
  std::vector<FeedbackPolicy> policy;     // per non-leaf node
  std::vector<ValueFunction> value;       // per node where computed
  std::vector<VectorXd> shared_input;     // condensed strategy: explicit inputs at steps 0..N_b
  double max_feedforward{0.0};
  double p1_seconds{0.0};
  double p2_seconds{0.0};
};

struct BackwardPassOptions {
  BackwardStrategy strategy{BackwardStrategy::scan_tree_riccati};
  ScanOrder scan_order{ScanOrder::tree};
  bool parallel{true};
  double regularization{0.0};
  VectorXd dx0;  // needed by the condensed strategy; defaults to zero
};

namespace detail {

struct ChainData {
  int head{0};
  std::vector<int> nodes;  // head .. leaf
};

/// The pure chains hanging below the last branching step: one per node at
/// step N_b + 1, each ending at exactly one leaf.
inline std::vector<ChainData> branch_chains(const TreeTopology& tree, int boundary_step) {
  std::vector<ChainData> chains;
  for (int h = tree.nodes_at_step_begin(boundary_step); h < tree.nodes_at_step_end(boundary_step); ++h) {
    ChainData chain;
    chain.head = h;
    for (int n = h; !tree.is_leaf(n); n = tree.children[static_cast<size_t>(n)][0]) chain.nodes.push_back(n);
    chain.nodes.push_back(chain.nodes.empty() ? h : tree.children[static_cast<size_t>(chain.nodes.back())][0]);
    chains.push_back(std::move(chain));
  }
  return chains;
}

inline StageModel chain_stage(const TreeStageModels& models, int node, int child) {
  StageModel s = models.stage[static_cast<size_t>(node)];
  s.c = models.defect[static_cast<size_t>(child)];
  return s;
}

}  // namespace detail

/// Backward pass of the LQR-Tree problem, split at the last branching step.
/// P1 solves each branch tail by the associative scan (branches processed
/// independently, optionally concurrently); P2 solves the shared segment
/// either by tree Riccati recursion or by condensing against the P1 boundary
/// values. The sequential_riccati strategy runs the plain tree recursion over
/// the whole horizon instead.
inline BackwardPassResult backward_pass(const TreeStageModels& models_in,
                                        const BackwardPassOptions& opts) {
  using clock = std::chrono::steady_clock;
  const TreeTopology& tree = models_in.topology;
  const int nx = models_in.stage[0].state_dim();
  const int nu = models_in.stage[0].input_dim();

  const TreeStageModels* models = &models_in;
  TreeStageModels regularized;
  if (opts.regularization > 0.0) {
    regularized = models_in;
    for (int i = 0; i < tree.node_count; ++i) {
      if (tree.is_leaf(i)) {
        regularized.leaf_cost[static_cast<size_t>(i)].P.diagonal().array() += opts.regularization;
      } else {
        regularized.stage[static_cast<size_t>(i)].R.diagonal().array() += opts.regularization;
      }
    }
    models = &regularized;
  }

  BackwardPassResult out;
  out.policy.resize(static_cast<size_t>(tree.node_count));
  out.value.resize(static_cast<size_t>(tree.node_count));

  if (opts.strategy == BackwardStrategy::sequential_riccati) {
    const auto t0 = clock::now();
    auto full = riccati_tree(*models);
    out.value = std::move(full.value);
    out.policy = std::move(full.policy);
    out.p2_seconds = std::chrono::duration<double>(clock::now() - t0).count();
  } else {
    // P1: per-branch suffix scans from the leaves down to step N_b + 1.
    const int boundary = tree.last_branch_step + 1;
    const auto chains = detail::branch_chains(tree, boundary);
    const auto t0 = clock::now();

    struct ChainResult {
      std::vector<ValueFunction> values;     // per chain node
      std::vector<FeedbackPolicy> policies;  // per chain node except the leaf
    };
    const auto solve_chain = [&](const detail::ChainData& chain) {
      ChainResult res;
      const int steps = static_cast<int>(chain.nodes.size()) - 1;
      if (steps == 0) {
        res.values.push_back(models->leaf_cost[static_cast<size_t>(chain.head)]);
        return res;
      }
      std::vector<StageModel> stages;
      stages.reserve(static_cast<size_t>(steps));
      for (int k = 0; k < steps; ++k) {
        stages.push_back(detail::chain_stage(*models, chain.nodes[static_cast<size_t>(k)],
                                             chain.nodes[static_cast<size_t>(k) + 1]));
      }
      res.values = backward_scan(stages, models->leaf_cost[static_cast<size_t>(chain.nodes.back())],
                                 opts.scan_order);
      res.policies.resize(static_cast<size_t>(steps));
      for (int k = 0; k < steps; ++k) {
        res.policies[static_cast<size_t>(k)] =
            feedback_from_values(stages[static_cast<size_t>(k)], res.values[static_cast<size_t>(k) + 1]);
      }
      return res;
    };

    std::vector<ChainResult> results(chains.size());
    if (opts.parallel && chains.size() > 1) {
      std::vector<std::future<ChainResult>> futures;
      futures.reserve(chains.size());
      for (const auto& chain : chains) {
        futures.push_back(std::async(std::launch::async, solve_chain, std::cref(chain)));
      }
      for (size_t i = 0; i < futures.size(); ++i) results[i] = futures[i].get();
    } else {
      for (size_t i = 0; i < chains.size(); ++i) results[i] = solve_chain(chains[i]);
    }
    for (size_t ci = 0; ci < chains.size(); ++ci) {
      const auto& chain = chains[ci];
      for (size_t k = 0; k < chain.nodes.size(); ++k) {
        out.value[static_cast<size_t>(chain.nodes[k])] = results[ci].values[k];
        if (k + 1 < chain.nodes.size()) {
          out.policy[static_cast<size_t>(chain.nodes[k])] = results[ci].policies[k];
        }
      }
    }
    out.p1_seconds = std::chrono::duration<double>(clock::now() - t0).count();

    // P2: shared segment against the boundary values. Empty for path graphs.
    const auto t1 = clock::now();
    if (opts.strategy == BackwardStrategy::scan_tree_riccati) {
      auto part = riccati_tree_from(*models, boundary, out.value);
      for (int i = 0; i < tree.nodes_at_step_begin(boundary); ++i) {
        out.value[static_cast<size_t>(i)] = std::move(part.value[static_cast<size_t>(i)]);
        out.policy[static_cast<size_t>(i)] = std::move(part.policy[static_cast<size_t>(i)]);
      }
    } else if (boundary >= 1) {
      VectorXd dx0 = opts.dx0.size() == nx ? opts.dx0 : VectorXd::Zero(nx);
      const TreeCondensed tc = condense_tree(*models, dx0, boundary, out.value, opts.scan_order);
      const VectorXd u_tree = solve_dense(tc.qp);
      out.shared_input.resize(static_cast<size_t>(tree.node_count));
      for (int i = 0; i < tree.nodes_at_step_begin(boundary); ++i) {
        const int slot = tc.gamma.slot_of_node[static_cast<size_t>(i)];
        out.shared_input[static_cast<size_t>(i)] = u_tree.segment(slot * nu, nu);
        out.policy[static_cast<size_t>(i)] = {MatrixXd::Zero(nu, nx),
                                              out.shared_input[static_cast<size_t>(i)]};
      }
    }
    out.p2_seconds = std::chrono::duration<double>(clock::now() - t1).count();
  }

  for (int i = 0; i < tree.node_count; ++i) {
    if (tree.is_leaf(i)) continue;
    out.max_feedforward =
        std::max(out.max_feedforward, out.policy[static_cast<size_t>(i)].k.lpNorm<Eigen::Infinity>());
  }
  return out;
}

/// State and input perturbation trees.
struct DeltaTrees {
  std::vector<VectorXd> dx;  // per node
  std::vector<VectorXd> du;  // per non-leaf node
};

/// Parallel linear rollout of the closed-loop maps: the shared segment is
/// propagated once per node, the per-branch tails by forward scans (one
/// independent scan per branch). The linearized dynamics hold exactly:
/// dx_i = A dx_p + B du_p + defect_i.
inline DeltaTrees linear_rollout(const TreeStageModels& models,
                                 const std::vector<FeedbackPolicy>& policies, const VectorXd& dx0,
                                 ScanOrder order = ScanOrder::tree, bool parallel = true) {
  const TreeTopology& tree = models.topology;
  DeltaTrees out;
  out.dx.resize(static_cast<size_t>(tree.node_count));
  out.du.resize(static_cast<size_t>(tree.node_count));
  out.dx[0] = dx0;

  const int boundary = tree.last_branch_step + 1;
  // Shared segment: each node computed exactly once.
  for (int i = 0; i < tree.nodes_at_step_begin(boundary); ++i) {
    const StageModel& s = models.stage[static_cast<size_t>(i)];
    const FeedbackPolicy& pol = policies[static_cast<size_t>(i)];
    const MatrixXd Acl = s.A + s.B * pol.K;
    const VectorXd Bk = s.B * pol.k;
    for (int ch : tree.children[static_cast<size_t>(i)]) {
      out.dx[static_cast<size_t>(ch)] =
          Acl * out.dx[static_cast<size_t>(i)] + Bk + models.defect[static_cast<size_t>(ch)];
    }
  }
  // Branch tails by forward scans.
  const auto chains = detail::branch_chains(tree, boundary);
  const auto roll_chain = [&](const detail::ChainData& chain) {
    const int steps = static_cast<int>(chain.nodes.size()) - 1;
    if (steps == 0) return std::vector<VectorXd>{};
    std::vector<ScanElementFwd> elems;
    elems.reserve(static_cast<size_t>(steps));
    for (int k = 0; k < steps; ++k) {
      const int node = chain.nodes[static_cast<size_t>(k)];
      elems.push_back(init_fwd_element(detail::chain_stage(models, node, chain.nodes[static_cast<size_t>(k) + 1]),
                                       policies[static_cast<size_t>(node)]));
    }
    return forward_scan(elems, out.dx[static_cast<size_t>(chain.head)], order);
  };
  std::vector<std::vector<VectorXd>> tails(chains.size());
  if (parallel && chains.size() > 1) {
    std::vector<std::future<std::vector<VectorXd>>> futures;
    futures.reserve(chains.size());
    for (const auto& chain : chains) {
      futures.push_back(std::async(std::launch::async, roll_chain, std::cref(chain)));
    }
    for (size_t i = 0; i < futures.size(); ++i) tails[i] = futures[i].get();
  } else {
    for (size_t i = 0; i < chains.size(); ++i) tails[i] = roll_chain(chains[i]);
  }
  for (size_t ci = 0; ci < chains.size(); ++ci) {
    for (size_t k = 0; k < tails[ci].size(); ++k) {
      out.dx[static_cast<size_t>(chains[ci].nodes[k + 1])] = tails[ci][k];
    }
  }
  for (int i = 0; i < tree.node_count; ++i) {
    if (tree.is_leaf(i)) continue;
    out.du[static_cast<size_t>(i)] =
        policies[static_cast<size_t>(i)].K * out.dx[static_cast<size_t>(i)] + policies[static_cast<size_t>(i)].k;
  }
  return out;
}

/// L1 merit: AL objective plus mu times the summed absolute defects.
inline double merit(const BmpcProblem& problem, const TrajectoryTree& traj, const ALState& al,
                    double mu) {
  const ProblemEval ev = evaluate(problem, traj, al);
  if (!ev.finite) return std::numeric_limits<double>::infinity();
  return ev.cost_al + mu * ev.defect_l1;
}

/// Adaptive merit weight: trial = EC(1) / ((1 - gamma) |d|_1) + mu0 when the
/// defects are above epsilon, then mu = max(trial, previous). Non-decreasing
/// across iterations.
inline double update_mu(double mu_prev, double expected_change_full, double defect_l1, double gamma,
                        double mu0, double epsilon) {
  double trial = mu_prev;
  if (defect_l1 > epsilon) {
    trial = expected_change_full / ((1.0 - gamma) * defect_l1) + mu0;
  }
  return std::max(trial, mu_prev);
}

/// Coefficients of the quadratic model change EC(alpha) = a1 alpha + a2 alpha^2
/// obtained by substituting the perturbation trees into the weighted
/// quadratic expansion.
inline std::pair<double, double> expected_change_coefficients(const TreeStageModels& models,
                                                              const DeltaTrees& delta) {
  const TreeTopology& tree = models.topology;
  double a1 = 0.0, a2 = 0.0;
  for (int i = 0; i < tree.node_count; ++i) {
    const VectorXd& dx = delta.dx[static_cast<size_t>(i)];
    if (tree.is_leaf(i)) {
      const ValueFunction& vf = models.leaf_cost[static_cast<size_t>(i)];
      a1 += vf.p.dot(dx);
      a2 += 0.5 * dx.dot(vf.P * dx);
    } else {
      const StageModel& s = models.stage[static_cast<size_t>(i)];
      const VectorXd& du = delta.du[static_cast<size_t>(i)];
      a1 += s.q.dot(dx) + s.r.dot(du);
      a2 += 0.5 * dx.dot(s.Q * dx) + du.dot(s.M * dx) + 0.5 * du.dot(s.R * du);
    }
  }
  return {a1, a2};
}

struct LineSearchResult {
  bool accepted{false};
  double alpha{0.0};
  double merit_value{0.0};
  double model_decrease{0.0};  // beta (EC(alpha) - alpha mu |d|_1) of the accepted step
  TrajectoryTree trajectory;
  int trials{0};
};

struct LineSearchInputs {
  const BmpcProblem* problem{nullptr};
  const ALState* al{nullptr};
  const TrajectoryTree* nominal{nullptr};
  const DeltaTrees* delta{nullptr};
  const std::vector<FeedbackPolicy>* policies{nullptr};  // for nonlinear rollouts
  double a1{0.0};
  double a2{0.0};
  double mu{0.0};
  double merit0{0.0};
  double defect_l1{0.0};
};

/// Armijo-style search over the alpha grid {1, 1/2, ...}: a trial is accepted
/// when M(alpha) <= M(0) + beta (EC(alpha) - alpha mu |d|_1). In parallel
/// mode every trial is evaluated independently (order-independent by
/// contract) and the largest accepted step is returned; sequential mode
/// backtracks from alpha = 1. Non-finite trial merits reject the trial.
inline LineSearchResult line_search(const LineSearchInputs& in, const SolverOptions& opts) {
  std::vector<double> alphas(static_cast<size_t>(opts.alpha_levels));
  for (int l = 0; l < opts.alpha_levels; ++l) alphas[static_cast<size_t>(l)] = std::pow(0.5, l);

  const auto make_trial = [&](double alpha) {
    if (opts.forward == ForwardMode::nonlinear_rollout) {
      return nonlinear_rollout(*in.problem, *in.nominal, *in.policies, alpha,
                               in.problem->initial_state);
    }
    const TreeTopology& tree = in.problem->tree;
    TrajectoryTree trial = *in.nominal;
    for (int i = 0; i < tree.node_count; ++i) {
      trial.state[static_cast<size_t>(i)] += alpha * in.delta->dx[static_cast<size_t>(i)];
      if (!tree.is_leaf(i)) trial.input[static_cast<size_t>(i)] += alpha * in.delta->du[static_cast<size_t>(i)];
    }
    return trial;
  };
  const auto decrease = [&](double alpha) {
    const double ec = in.a1 * alpha + in.a2 * alpha * alpha;
    return opts.armijo_beta * (ec - alpha * in.mu * in.defect_l1);
  };

  struct Trial {
    double merit_value{std::numeric_limits<double>::infinity()};
    TrajectoryTree trajectory;
  };
  const auto evaluate_trial = [&](double alpha) {
    Trial t;
    try {
      t.trajectory = make_trial(alpha);
      t.merit_value = merit(*in.problem, t.trajectory, *in.al, in.mu);
    } catch (const std::exception&) {
      t.merit_value = std::numeric_limits<double>::infinity();
    }
    return t;
  };

  LineSearchResult result;
  if (opts.line_search == LineSearchMode::parallel) {
    std::vector<Trial> trials(alphas.size());
    if (opts.parallel) {
      std::vector<std::future<Trial>> futures;
      futures.reserve(alphas.size());
      for (double alpha : alphas) futures.push_back(std::async(std::launch::async, evaluate_trial, alpha));
      for (size_t i = 0; i < futures.size(); ++i) trials[i] = futures[i].get();
    } else {
      for (size_t i = 0; i < alphas.size(); ++i) trials[i] = evaluate_trial(alphas[i]);
    }
    result.trials = static_cast<int>(alphas.size());
    for (size_t i = 0; i < alphas.size(); ++i) {  // alphas descending: first hit is the largest
      if (std::isfinite(trials[i].merit_value) &&
          trials[i].merit_value <= in.merit0 + decrease(alphas[i])) {
        result.accepted = true;
        result.alpha = alphas[i];
        result.merit_value = trials[i].merit_value;
        result.model_decrease = decrease(alphas[i]);
        result.trajectory = std::move(trials[i].trajectory);
        break;
      }
    }
  } else {
    for (double alpha : alphas) {
      ++result.trials;
      Trial t = evaluate_trial(alpha);
      if (std::isfinite(t.merit_value) && t.merit_value <= in.merit0 + decrease(alpha)) {
        result.accepted = true;
        result.alpha = alpha;
        result.merit_value = t.merit_value;
        result.model_decrease = decrease(alpha);
        result.trajectory = std::move(t.trajectory);
        break;
      }
    }
  }
  return result;
}

enum class SolveStatus { converged, max_iterations, error };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iterations: return "max-iter";
    case SolveStatus::error: return "error";
  }
  return "unknown";
}

struct IterationRecord {
  int outer{0};
  double cost{0.0};     // weighted objective after the step
  double cost_al{0.0};  // AL objective after the step
  double merit_before{0.0};
  double merit_after{0.0};
  double model_decrease{0.0};
  double defect_l1{0.0};
  double violation{0.0};
  double alpha{0.0};
  double mu{0.0};
  double max_feedforward{0.0};
  double regularization{0.0};
  bool accepted{false};
};

struct PhaseTimes {
  double setup_s{0.0};
  double backward_p1_s{0.0};
  double backward_p2_s{0.0};
  double forward_s{0.0};
  double line_search_s{0.0};
  double total_s{0.0};
};

struct SolveReport {
  SolveStatus status{SolveStatus::error};
  std::string message;
  int inner_iterations{0};  // accepted steps
  int outer_iterations{0};
  double final_cost{0.0};
  double final_violation{0.0};
  double final_defect_l1{0.0};
  std::vector<IterationRecord> iterations;
  PhaseTimes times;
};

struct SolveResult {
  TrajectoryTree trajectory;
  SolveReport report;
};

/// Multiple-shooting iLQR-Tree with an augmented-Lagrangian outer loop:
/// linearize -> backward pass (P1 scans + P2) -> linear rollout -> adaptive
/// merit weight -> line search, iterated to stationarity; then multiplier
/// and penalty updates until the maximum constraint violation meets the
/// tolerance. The default initial guess rolls zero inputs through the
/// nonlinear dynamics so the first defects vanish.
inline SolveResult solve(const BmpcProblem& problem, const SolverOptions& opts = {},
                         const std::vector<VectorXd>* initial_inputs = nullptr) {
  using clock = std::chrono::steady_clock;
  const auto t_start = clock::now();
  const TreeTopology& tree = problem.tree;

  SolveResult result;
  SolveReport& report = result.report;

  std::vector<VectorXd> inputs(static_cast<size_t>(tree.node_count));
  for (int i = 0; i < tree.node_count; ++i) {
    inputs[static_cast<size_t>(i)] = initial_inputs
                                         ? (*initial_inputs)[static_cast<size_t>(i)]
                                         : VectorXd::Zero(problem.input_dim);
  }
  TrajectoryTree traj = nonlinear_rollout(problem, inputs, problem.initial_state);

  ALState al = ALState::Zero(problem, opts.penalty_init);
  double mu = opts.merit_mu_init;
  double reg = opts.reg_init;
  bool inner_converged = false;
  bool failed = false;

  const auto seconds_since = [](clock::time_point t) {
    return std::chrono::duration<double>(clock::now() - t).count();
  };

  for (int outer = 0; outer < opts.max_outer_iterations; ++outer) {
    ++report.outer_iterations;
    inner_converged = false;

    for (int pass = 0; pass < opts.max_inner_iterations; ++pass) {
      const auto t_setup = clock::now();
      TreeStageModels models;
      ProblemEval ev;
      try {
        models = linearize(problem, traj, al);
        ev = evaluate(problem, traj, al);
      } catch (const std::exception& e) {
        report.status = SolveStatus::error;
        report.message = e.what();
        failed = true;
        break;
      }
      report.times.setup_s += seconds_since(t_setup);

      BackwardPassOptions bp_opts;
      bp_opts.strategy = opts.backward;
      bp_opts.scan_order = opts.scan_order;
      bp_opts.parallel = opts.parallel;
      bp_opts.regularization = reg;
      bp_opts.dx0 = problem.initial_state - traj.state[0];

      BackwardPassResult bp;
      try {
        bp = backward_pass(models, bp_opts);
      } catch (const IndefiniteHessianError&) {
        reg = std::max(reg * opts.reg_growth, opts.reg_min);
        if (reg > opts.reg_max) {
          report.status = SolveStatus::error;
          report.message = "regularization exceeded its cap";
          failed = true;
          break;
        }
        continue;
      } catch (const FactorizationError& e) {
        reg = std::max(reg * opts.reg_growth, opts.reg_min);
        if (reg > opts.reg_max) {
          report.status = SolveStatus::error;
          report.message = e.what();
          failed = true;
          break;
        }
        continue;
      }
      report.times.backward_p1_s += bp.p1_seconds;
      report.times.backward_p2_s += bp.p2_seconds;

      const auto t_fwd = clock::now();
      const DeltaTrees delta =
          linear_rollout(models, bp.policy, bp_opts.dx0, opts.scan_order, opts.parallel);
      report.times.forward_s += seconds_since(t_fwd);

      const auto [a1, a2] = expected_change_coefficients(models, delta);
      const double ec_full = a1 + a2;

      if (ev.defect_l1 <= opts.tol_defect &&
          std::abs(ec_full) <= opts.tol_cost * (1.0 + std::abs(ev.cost_al)) &&
          bp.max_feedforward <= opts.tol_feedforward) {
        inner_converged = true;
        break;
      }

      mu = update_mu(mu, ec_full, ev.defect_l1, opts.merit_gamma, opts.merit_mu0,
                     opts.defect_epsilon);
      const double merit0 = ev.cost_al + mu * ev.defect_l1;

      LineSearchInputs ls_in;
      ls_in.problem = &problem;
      ls_in.al = &al;
      ls_in.nominal = &traj;
      ls_in.delta = &delta;
      ls_in.policies = &bp.policy;
      ls_in.a1 = a1;
      ls_in.a2 = a2;
      ls_in.mu = mu;
      ls_in.merit0 = merit0;
      ls_in.defect_l1 = ev.defect_l1;

      const auto t_ls = clock::now();
      LineSearchResult ls = line_search(ls_in, opts);
      report.times.line_search_s += seconds_since(t_ls);

      IterationRecord rec;
      rec.outer = outer;
      rec.merit_before = merit0;
      rec.mu = mu;
      rec.max_feedforward = bp.max_feedforward;
      rec.regularization = reg;
      rec.accepted = ls.accepted;
      rec.alpha = ls.alpha;
      rec.model_decrease = ls.model_decrease;

      if (!ls.accepted) {
        reg = std::max(reg * opts.reg_growth, opts.reg_min);
        rec.merit_after = merit0;
        const ProblemEval cur = evaluate(problem, traj, al);
        rec.cost = cur.cost;
        rec.cost_al = cur.cost_al;
        rec.defect_l1 = cur.defect_l1;
        rec.violation = cur.max_violation;
        report.iterations.push_back(rec);
        if (reg > opts.reg_max) {
          report.status = SolveStatus::error;
          report.message = "line search failed at maximum regularization";
          failed = true;
          break;
        }
        continue;
      }

      traj = std::move(ls.trajectory);
      reg = reg / opts.reg_decay >= opts.reg_min ? reg / opts.reg_decay : 0.0;
      ++report.inner_iterations;

      const ProblemEval after = evaluate(problem, traj, al);
      rec.merit_after = ls.merit_value;
      rec.cost = after.cost;
      rec.cost_al = after.cost_al;
      rec.defect_l1 = after.defect_l1;
      rec.violation = after.max_violation;
      report.iterations.push_back(rec);
    }
    if (failed) break;

    const ProblemEval ev = evaluate(problem, traj, al);
    if (!problem.has_constraints()) {
      report.status = inner_converged ? SolveStatus::converged : SolveStatus::max_iterations;
      break;
    }
    if (inner_converged && ev.max_violation <= opts.tol_constraint) {
      report.status = SolveStatus::converged;
      break;
    }
    if (outer + 1 == opts.max_outer_iterations) {
      report.status = SolveStatus::max_iterations;
      break;
    }
    // Projected multiplier update and penalty growth.
    for (int i = 0; i < tree.node_count; ++i) {
      if (problem.constraint_dim(i) == 0) continue;
      al.multiplier[static_cast<size_t>(i)] =
          (al.multiplier[static_cast<size_t>(i)] + al.penalty * ev.constraint_value[static_cast<size_t>(i)])
              .cwiseMax(0.0);
    }
    al.penalty = std::min(al.penalty * opts.penalty_growth, opts.penalty_max);
  }

  const ProblemEval final_ev = evaluate(problem, traj, al);
  report.final_cost = final_ev.cost;
  report.final_violation = final_ev.max_violation;
  report.final_defect_l1 = final_ev.defect_l1;
  report.times.total_s = seconds_since(t_start);
  result.trajectory = std::move(traj);
  return result;
}

}  // namespace bmpc
