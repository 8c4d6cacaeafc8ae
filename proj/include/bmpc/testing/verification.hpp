#pragma once

// Oracle-equivalence suites shared by the acceptance tests and the
// command-line verifier. Each check pits an implementation path against an
// independent oracle and reports the worst observed error next to the bound
// it must stay under.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "bmpc/condensed.hpp"
#include "bmpc/lqr_scan.hpp"
#include "bmpc/riccati.hpp"
#include "bmpc/solver.hpp"
#include "bmpc/testing/oracles.hpp"

namespace bmpc::testing {

struct CheckResult {
  std::string name;
  bool passed{false};
  double max_error{0.0};
  double tolerance{0.0};
  std::string detail;
};

struct VerifyOptions {
  unsigned seed{12345};
  // Fault injection for harness sanity checks: flips the sign of the dynamics
  // offsets fed to the scan (and only to the scan), which must trip the
  // scan-vs-Riccati comparison.
  bool mutate_scan_sign{false};
};

/// Scan vs sequential Riccati over a grid of random instances
/// (nx in {2,4,8} x nu in {1,2,4} x N in {8,64,511}, several repetitions):
/// per-step relative error of the value matrices and vectors.
inline CheckResult check_scan_vs_riccati(const VerifyOptions& opts = {}) {
  CheckResult res{"scan-vs-riccati", false, 0.0, 1e-8, ""};
  std::mt19937_64 rng(opts.seed);
  int instances = 0;
  for (const int nx : {2, 4, 8}) {
    for (const int nu : {1, 2, 4}) {
      for (const int N : {8, 64, 511}) {
        for (int rep = 0; rep < 4; ++rep) {
          auto stages = random_path(rng, nx, nu, N);
          const ValueFunction terminal = random_terminal(rng, nx);
          const auto ric = riccati_path(stages, terminal);
          if (opts.mutate_scan_sign) {
            for (auto& s : stages) s.c = -s.c;
          }
          const auto values = backward_scan(stages, terminal, ScanOrder::tree);
          for (int k = 0; k <= N; ++k) {
            res.max_error = std::max(
                res.max_error, relative_error(values[static_cast<size_t>(k)].P,
                                              ric.values[static_cast<size_t>(k)].P));
            res.max_error = std::max(
                res.max_error, relative_error(values[static_cast<size_t>(k)].p,
                                              ric.values[static_cast<size_t>(k)].p));
          }
          ++instances;
        }
      }
    }
  }
  res.detail = std::to_string(instances) + " instances";
  res.passed = res.max_error <= res.tolerance;
  return res;
}

/// Forward scan vs sequential closed-loop rollout on the same grid.
inline CheckResult check_forward_scan(const VerifyOptions& opts = {}) {
  CheckResult res{"forward-scan-vs-rollout", false, 0.0, 1e-10, ""};
  std::mt19937_64 rng(opts.seed + 1);
  int instances = 0;
  for (const int nx : {2, 4, 8}) {
    for (const int nu : {1, 2, 4}) {
      for (const int N : {8, 64, 511}) {
        const auto stages = random_path(rng, nx, nu, N);
        const ValueFunction terminal = random_terminal(rng, nx);
        const auto ric = riccati_path(stages, terminal);
        std::vector<ScanElementFwd> elems;
        elems.reserve(static_cast<size_t>(N));
        for (int k = 0; k < N; ++k) {
          elems.push_back(init_fwd_element(stages[static_cast<size_t>(k)],
                                           ric.policies[static_cast<size_t>(k)]));
        }
        const VectorXd x0 = random_vector(rng, nx);
        const auto scan_states = forward_scan(elems, x0, ScanOrder::tree);
        const auto seq_states = sequential_rollout(stages, ric.policies, x0);
        for (int k = 0; k < N; ++k) {
          res.max_error = std::max(res.max_error,
                                   relative_error(scan_states[static_cast<size_t>(k)],
                                                  seq_states[static_cast<size_t>(k)]));
        }
        ++instances;
      }
    }
  }
  res.detail = std::to_string(instances) + " instances";
  res.passed = res.max_error <= res.tolerance;
  return res;
}

/// Associativity of both combinators over random element triples.
inline CheckResult check_associativity(const VerifyOptions& opts = {}, int triples = 1000) {
  CheckResult res{"associativity", false, 0.0, 1e-9, ""};
  std::mt19937_64 rng(opts.seed + 2);
  for (int t = 0; t < triples; ++t) {
    const int nx = 2 + static_cast<int>(rng() % 3);
    const int nu = 1 + static_cast<int>(rng() % 3);
    const ScanElementBwd a = init_bwd_element(random_stage(rng, nx, nu));
    const ScanElementBwd b = init_bwd_element(random_stage(rng, nx, nu));
    const ScanElementBwd c = init_bwd_element(random_stage(rng, nx, nu));
    const ScanElementBwd left = combine_bwd(combine_bwd(a, b), c);
    const ScanElementBwd right = combine_bwd(a, combine_bwd(b, c));
    res.max_error = std::max({res.max_error, relative_error(left.P, right.P),
                              relative_error(left.p, right.p), relative_error(left.C, right.C),
                              relative_error(left.A, right.A), relative_error(left.c, right.c)});

    const auto fwd = [&] {
      return ScanElementFwd{random_matrix(rng, nx, nx), random_vector(rng, nx)};
    };
    const ScanElementFwd fa = fwd(), fb = fwd(), fc = fwd();
    const ScanElementFwd fl = combine_fwd(combine_fwd(fa, fb), fc);
    const ScanElementFwd fr = combine_fwd(fa, combine_fwd(fb, fc));
    res.max_error =
        std::max({res.max_error, relative_error(fl.A, fr.A), relative_error(fl.c, fr.c)});
  }
  res.detail = std::to_string(triples) + " triples per combinator";
  res.passed = res.max_error <= res.tolerance;
  return res;
}

/// Prediction identity, condensed-vs-Riccati on paths, and Gamma-expanded
/// tree condensing vs tree Riccati on small trees.
inline CheckResult check_condensing(const VerifyOptions& opts = {}) {
  CheckResult res{"condensing", false, 0.0, 0.0, ""};
  std::mt19937_64 rng(opts.seed + 3);
  double pred_err = 0.0, path_err = 0.0, tree_err = 0.0;

  for (int rep = 0; rep < 5; ++rep) {
    const int N = 6, nx = 3, nu = 2;
    const auto stages = random_path(rng, nx, nu, N);
    const PredictionMatrices pm = build_prediction(stages);
    const VectorXd x0 = random_vector(rng, nx);
    VectorXd u(N * nu), c(N * nx);
    for (int k = 0; k < N; ++k) {
      u.segment(k * nu, nu) = random_vector(rng, nu);
      c.segment(k * nx, nx) = random_vector(rng, nx);
    }
    VectorXd sim((N + 1) * nx);
    sim.head(nx) = x0;
    for (int k = 0; k < N; ++k) {
      sim.segment((k + 1) * nx, nx) = stages[static_cast<size_t>(k)].A * sim.segment(k * nx, nx) +
                                      stages[static_cast<size_t>(k)].B * u.segment(k * nu, nu) +
                                      c.segment(k * nx, nx);
    }
    pred_err = std::max(pred_err,
                        (sim - (pm.Phi * x0 + pm.S * u + pm.F * c)).norm() / sim.norm());

    const ValueFunction terminal = random_terminal(rng, nx);
    const VectorXd u_cond = solve_dense(condense(stages, terminal, x0));
    const auto ric = riccati_path(stages, terminal);
    const auto xs = sequential_rollout(stages, ric.policies, x0);
    VectorXd u_ric(N * nu);
    for (int k = 0; k < N; ++k) {
      const VectorXd& xk = k == 0 ? x0 : xs[static_cast<size_t>(k) - 1];
      u_ric.segment(k * nu, nu) =
          ric.policies[static_cast<size_t>(k)].K * xk + ric.policies[static_cast<size_t>(k)].k;
    }
    path_err = std::max(path_err, (u_cond - u_ric).norm() / u_ric.norm());
  }

  // Trees of at most 30 nodes.
  const std::vector<TreeTopology> trees = {
      build_tree(6, {{4, 2, {0.5, 0.5}}}),
      build_tree(5, {{2, 3, {0.3, 0.4, 0.3}}}),
      build_tree(6, {{2, 2, {0.5, 0.5}}, {4, 2, {0.25, 0.75}}}),
  };
  for (const TreeTopology& tree : trees) {
    const int nx = 3, nu = 2;
    const TreeStageModels models = random_tree_models(rng, tree, nx, nu);
    const VectorXd x0 = random_vector(rng, nx);
    const int boundary = tree.last_branch_step + 1;
    const auto full = riccati_tree(models);
    std::vector<ValueFunction> boundary_values(static_cast<size_t>(tree.node_count));
    for (int i = tree.nodes_at_step_begin(boundary); i < tree.nodes_at_step_end(boundary); ++i) {
      boundary_values[static_cast<size_t>(i)] = full.value[static_cast<size_t>(i)];
    }
    const TreeCondensed tc = condense_tree(models, x0, boundary, boundary_values);
    const VectorXd u_tree = solve_dense(tc.qp);
    std::vector<VectorXd> x(static_cast<size_t>(tree.node_count));
    x[0] = x0;
    for (int i = 0; i < tree.nodes_at_step_begin(boundary); ++i) {
      const VectorXd u_i = full.policy[static_cast<size_t>(i)].K * x[static_cast<size_t>(i)] +
                           full.policy[static_cast<size_t>(i)].k;
      for (int ch : tree.children[static_cast<size_t>(i)]) {
        x[static_cast<size_t>(ch)] =
            models.stage[static_cast<size_t>(i)].A * x[static_cast<size_t>(i)] +
            models.stage[static_cast<size_t>(i)].B * u_i + models.defect[static_cast<size_t>(ch)];
      }
      const int slot = tc.gamma.slot_of_node[static_cast<size_t>(i)];
      tree_err = std::max(tree_err, (u_tree.segment(slot * nu, nu) - u_i).norm() /
                                        std::max(1.0, u_i.norm()));
    }
  }

  const bool ok = pred_err <= 1e-10 && path_err <= 1e-8 && tree_err <= 1e-7;
  res.max_error = std::max({pred_err, path_err, tree_err});
  res.tolerance = 1e-7;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "prediction %.2e (<=1e-10), path %.2e (<=1e-8), tree %.2e (<=1e-7)", pred_err,
                path_err, tree_err);
  res.detail = buf;
  res.passed = ok;
  return res;
}

/// Tree Riccati vs brute-force KKT solve of the full tree QP on the 12-node
/// 2-leaf topology and a 4-leaf two-stage tree.
inline CheckResult check_tree_qp(const VerifyOptions& opts = {}) {
  CheckResult res{"tree-riccati-vs-dense-qp", false, 0.0, 1e-7, ""};
  std::mt19937_64 rng(opts.seed + 4);
  const std::vector<TreeTopology> trees = {
      build_tree(7, {{3, 2, {0.5, 0.5}}}),  // 12 nodes, 2 leaves
      build_tree(6, {{2, 2, {0.5, 0.5}}, {4, 2, {0.4, 0.6}}}),  // 15 nodes, 4 leaves
  };
  for (const TreeTopology& tree : trees) {
    const int nx = 4, nu = 2;
    const TreeStageModels models = random_tree_models(rng, tree, nx, nu);
    const VectorXd x0 = random_vector(rng, nx);
    const auto qp = dense_tree_qp(models, x0);
    const auto bwd = riccati_tree(models);
    std::vector<VectorXd> x(static_cast<size_t>(tree.node_count));
    x[0] = x0;
    for (int i = 0; i < tree.node_count; ++i) {
      if (tree.is_leaf(i)) continue;
      const VectorXd u = bwd.policy[static_cast<size_t>(i)].K * x[static_cast<size_t>(i)] +
                         bwd.policy[static_cast<size_t>(i)].k;
      res.max_error =
          std::max(res.max_error, relative_error(u, qp.inputs[static_cast<size_t>(i)]));
      for (int ch : tree.children[static_cast<size_t>(i)]) {
        x[static_cast<size_t>(ch)] =
            models.stage[static_cast<size_t>(i)].A * x[static_cast<size_t>(i)] +
            models.stage[static_cast<size_t>(i)].B * u + models.defect[static_cast<size_t>(ch)];
        res.max_error = std::max(res.max_error, relative_error(x[static_cast<size_t>(ch)],
                                                               qp.states[static_cast<size_t>(ch)]));
      }
    }
  }
  res.detail = "12-node/2-leaf and 15-node/4-leaf topologies";
  res.passed = res.max_error <= res.tolerance;
  return res;
}

/// The three backward strategies produce the same optimal perturbations.
inline CheckResult check_cross_strategy(const VerifyOptions& opts = {}) {
  CheckResult res{"cross-strategy", false, 0.0, 1e-6, ""};
  std::mt19937_64 rng(opts.seed + 5);
  const std::vector<TreeTopology> trees = {
      build_tree(6, {{4, 2, {0.5, 0.5}}}),
      build_tree(6, {{2, 2, {0.5, 0.5}}, {4, 3, {0.2, 0.3, 0.5}}}),
      build_tree(5, {}),
  };
  for (const TreeTopology& tree : trees) {
    const int nx = 3, nu = 2;
    const TreeStageModels models = random_tree_models(rng, tree, nx, nu);
    const VectorXd dx0 = random_vector(rng, nx);
    std::vector<DeltaTrees> deltas;
    for (const BackwardStrategy strategy :
         {BackwardStrategy::scan_tree_riccati, BackwardStrategy::scan_condensed,
          BackwardStrategy::sequential_riccati}) {
      BackwardPassOptions bo;
      bo.strategy = strategy;
      bo.dx0 = dx0;
      const BackwardPassResult bp = backward_pass(models, bo);
      deltas.push_back(linear_rollout(models, bp.policy, dx0));
    }
    for (size_t s = 1; s < deltas.size(); ++s) {
      for (int i = 0; i < tree.node_count; ++i) {
        res.max_error = std::max(res.max_error, relative_error(deltas[s].dx[static_cast<size_t>(i)],
                                                               deltas[0].dx[static_cast<size_t>(i)]));
        if (!tree.is_leaf(i)) {
          res.max_error = std::max(res.max_error,
                                   relative_error(deltas[s].du[static_cast<size_t>(i)],
                                                  deltas[0].du[static_cast<size_t>(i)]));
        }
      }
    }
  }
  res.detail = "riccati / condensed / sequential backward passes";
  res.passed = res.max_error <= res.tolerance;
  return res;
}

inline std::vector<CheckResult> run_suites(const std::vector<std::string>& names,
                                           const VerifyOptions& opts = {}) {
  std::vector<CheckResult> results;
  const auto wants = [&](const std::string& n) {
    if (names.empty()) return true;
    for (const auto& name : names) {
      if (name == n || name == "all") return true;
    }
    return false;
  };
  if (wants("scan-riccati")) results.push_back(check_scan_vs_riccati(opts));
  if (wants("forward")) results.push_back(check_forward_scan(opts));
  if (wants("associativity")) results.push_back(check_associativity(opts));
  if (wants("condensing")) results.push_back(check_condensing(opts));
  if (wants("tree-qp")) results.push_back(check_tree_qp(opts));
  if (wants("cross-strategy")) results.push_back(check_cross_strategy(opts));
  return results;
}

}  // namespace bmpc::testing
