// Acceptance suite: end-to-end checks of every advertised guarantee, each
// printing one pass/fail line with the measured worst error and its bound.

#include <gtest/gtest.h>

#include <chrono>
#include <cstdio>
#include <random>

#include "bmpc/scenarios.hpp"
#include "bmpc/solver.hpp"
#include "bmpc/testing/oracles.hpp"
#include "bmpc/testing/verification.hpp"

namespace {

using namespace bmpc;
namespace oracle = bmpc::testing;

void print_line(const char* name, bool passed, double err, double tol, const std::string& extra) {
  std::printf("[%s] %s: max error %.3e (tolerance %.1e)%s%s\n", passed ? "PASS" : "FAIL", name, err,
              tol, extra.empty() ? "" : ", ", extra.c_str());
  std::fflush(stdout);
}

TEST(Acceptance, ScanRiccatiEquivalence) {
  const auto t0 = std::chrono::steady_clock::now();
  const oracle::CheckResult res = oracle::check_scan_vs_riccati();
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  print_line("scan-vs-riccati", res.passed && elapsed <= 60.0, res.max_error, res.tolerance,
             res.detail + ", " + std::to_string(elapsed) + " s");
  EXPECT_TRUE(res.passed);
  EXPECT_LE(res.max_error, 1e-8);
  EXPECT_LE(elapsed, 60.0);
}

TEST(Acceptance, ForwardScanEquivalence) {
  const oracle::CheckResult res = oracle::check_forward_scan();
  print_line("forward-scan", res.passed, res.max_error, res.tolerance, res.detail);
  EXPECT_TRUE(res.passed);
  EXPECT_LE(res.max_error, 1e-10);
}

TEST(Acceptance, Associativity) {
  const oracle::CheckResult res = oracle::check_associativity({}, 1000);
  print_line("associativity", res.passed, res.max_error, res.tolerance, res.detail);
  EXPECT_TRUE(res.passed);
  EXPECT_LE(res.max_error, 1e-9);
}

TEST(Acceptance, CondensingCorrectness) {
  const oracle::CheckResult res = oracle::check_condensing();
  print_line("condensing", res.passed, res.max_error, res.tolerance, res.detail);
  EXPECT_TRUE(res.passed);
}

TEST(Acceptance, DenseTreeQpOracle) {
  const oracle::CheckResult res = oracle::check_tree_qp();
  print_line("tree-qp-oracle", res.passed, res.max_error, res.tolerance, res.detail);
  EXPECT_TRUE(res.passed);
  EXPECT_LE(res.max_error, 1e-7);
}

TEST(Acceptance, OneIterationLqConvergence) {
  std::mt19937_64 rng(2024);
  bool all_one_iteration = true;
  double worst_defect = 0.0;
  int runs = 0;
  for (const auto strategy : {BackwardStrategy::scan_tree_riccati, BackwardStrategy::scan_condensed,
                              BackwardStrategy::sequential_riccati}) {
    for (const TreeTopology& tree :
         {build_tree(6, {{2, 2, {0.5, 0.5}}}), build_tree(7, {{3, 2, {0.5, 0.5}}}),
          build_tree(5, {})}) {
      const BmpcProblem problem = oracle::random_lq_problem(rng, tree, 3, 2);
      SolverOptions opts;
      opts.backward = strategy;
      const SolveResult res = solve(problem, opts);
      ++runs;
      all_one_iteration = all_one_iteration && res.report.status == SolveStatus::converged &&
                          res.report.inner_iterations == 1 && !res.report.iterations.empty() &&
                          res.report.iterations[0].alpha == 1.0;
      worst_defect = std::max(worst_defect, res.report.final_defect_l1);
    }
  }
  const bool passed = all_one_iteration && worst_defect <= 1e-10;
  print_line("one-iteration-lq", passed, worst_defect, 1e-10,
             std::to_string(runs) + " linear-quadratic instances, all single-step");
  EXPECT_TRUE(all_one_iteration);
  EXPECT_LE(worst_defect, 1e-10);
}

TEST(Acceptance, ConstrainedConvergence) {
  const ScenarioSpec spec = intersection_spec(63, 10.0, 0.1);
  const BmpcProblem problem = build_intersection_case(spec, 2, 2);

  SolverOptions riccati_opts;
  riccati_opts.backward = BackwardStrategy::scan_tree_riccati;
  const SolveResult a = solve(problem, riccati_opts);

  SolverOptions condensed_opts;
  condensed_opts.backward = BackwardStrategy::scan_condensed;
  const SolveResult b = solve(problem, condensed_opts);

  const double cost_gap =
      std::abs(a.report.final_cost - b.report.final_cost) / (1.0 + std::abs(a.report.final_cost));
  const bool passed = a.report.status == SolveStatus::converged &&
                      b.report.status == SolveStatus::converged &&
                      a.report.final_violation <= 1e-4 && b.report.final_violation <= 1e-4 &&
                      a.report.outer_iterations <= 10 && cost_gap <= 1e-5;
  print_line("constrained-intersection", passed,
             std::max(a.report.final_violation, b.report.final_violation), 1e-4,
             "P2 strategies' relative cost gap " + std::to_string(cost_gap) + " (<= 1e-5), " +
                 std::to_string(a.report.outer_iterations) + " outer iterations");
  EXPECT_EQ(a.report.status, SolveStatus::converged);
  EXPECT_EQ(b.report.status, SolveStatus::converged);
  EXPECT_LE(a.report.final_violation, 1e-4);
  EXPECT_LE(b.report.final_violation, 1e-4);
  EXPECT_LE(a.report.outer_iterations, 10);
  EXPECT_LE(cost_gap, 1e-5);
}

// Node-local AL cost: the objective is separable across nodes, so central
// differences against the node term equal differences of the full objective.
double node_al_cost(const BmpcProblem& problem, int node, const VectorXd& x, const VectorXd& u,
                    const ALState& al) {
  const double w = problem.tree.weight[static_cast<size_t>(node)];
  double value = problem.tree.is_leaf(node)
                     ? problem.terminal_cost[static_cast<size_t>(node)].value(x)
                     : problem.cost[static_cast<size_t>(node)].value(x, u);
  if (problem.constraint_dim(node) > 0) {
    const VectorXd g = problem.constraint[static_cast<size_t>(node)].value(x, u);
    const VectorXd& eta = al.multiplier[static_cast<size_t>(node)];
    for (int m = 0; m < g.size(); ++m) {
      if (g(m) >= 0.0 || eta(m) > 0.0) value += eta(m) * g(m) + 0.5 * al.penalty * g(m) * g(m);
    }
  }
  return w * value;
}

double al_gradient_check(const BmpcProblem& problem, std::mt19937_64& rng, int points) {
  double worst = 0.0;
  int checked = 0;
  while (checked < points) {
    TrajectoryTree traj = TrajectoryTree::Zero(problem.tree, problem.state_dim, problem.input_dim);
    for (int i = 0; i < problem.tree.node_count; ++i) {
      traj.state[static_cast<size_t>(i)] =
          problem.initial_state + oracle::random_vector(rng, problem.state_dim, 3.0);
      if (!problem.tree.is_leaf(i)) {
        traj.input[static_cast<size_t>(i)] = oracle::random_vector(rng, problem.input_dim, 1.0);
      }
    }
    ALState al = ALState::Zero(problem, 10.0);
    const ProblemEval probe = evaluate(problem, traj, al);
    for (int i = 0; i < problem.tree.node_count; ++i) {
      const VectorXd& g = probe.constraint_value[static_cast<size_t>(i)];
      for (int m = 0; m < g.size(); ++m) {
        if (g(m) > -20.0 && rng() % 2 == 0) al.multiplier[static_cast<size_t>(i)](m) = 0.5;
      }
    }
    // Off the switching surface only.
    bool near_switch = false;
    for (int i = 0; i < problem.tree.node_count && !near_switch; ++i) {
      const VectorXd& g = probe.constraint_value[static_cast<size_t>(i)];
      for (int m = 0; m < g.size(); ++m) {
        if (std::abs(g(m)) < 1e-3 && al.multiplier[static_cast<size_t>(i)](m) == 0.0) near_switch = true;
      }
    }
    if (near_switch) continue;
    ++checked;

    const TreeStageModels models = linearize(problem, traj, al);
    const double h = 1e-4;
    for (int i = 0; i < problem.tree.node_count; ++i) {
      const VectorXd& x = traj.state[static_cast<size_t>(i)];
      const VectorXd u =
          problem.tree.is_leaf(i) ? VectorXd() : traj.input[static_cast<size_t>(i)];
      VectorXd fd_x(problem.state_dim);
      for (int j = 0; j < problem.state_dim; ++j) {
        VectorXd xp = x, xm = x;
        xp(j) += h;
        xm(j) -= h;
        fd_x(j) = (node_al_cost(problem, i, xp, u, al) - node_al_cost(problem, i, xm, u, al)) / (2 * h);
      }
      const VectorXd& analytic_x = problem.tree.is_leaf(i)
                                       ? models.leaf_cost[static_cast<size_t>(i)].p
                                       : models.stage[static_cast<size_t>(i)].q;
      worst = std::max(worst, (analytic_x - fd_x).norm() / std::max(1.0, fd_x.norm()));
      if (problem.tree.is_leaf(i)) continue;
      VectorXd fd_u(problem.input_dim);
      for (int j = 0; j < problem.input_dim; ++j) {
        VectorXd up = u, um = u;
        up(j) += h;
        um(j) -= h;
        fd_u(j) = (node_al_cost(problem, i, x, up, al) - node_al_cost(problem, i, x, um, al)) / (2 * h);
      }
      worst = std::max(worst,
                       (models.stage[static_cast<size_t>(i)].r - fd_u).norm() / std::max(1.0, fd_u.norm()));
    }
  }
  return worst;
}

TEST(Acceptance, AlGradientCheck) {
  std::mt19937_64 rng(77);
  const BmpcProblem intersection = build_intersection_case(intersection_spec(25, 5.0, 0.4), 2, 2);
  const double err_intersection = al_gradient_check(intersection, rng, 50);
  const BmpcProblem latency = build_latency_case(latency_spec(0.5, 63, 5.0, 0.1));
  const double err_latency = al_gradient_check(latency, rng, 50);
  const double worst = std::max(err_intersection, err_latency);
  const bool passed = worst <= 1e-5;
  print_line("al-gradient-fd", passed, worst, 1e-5, "50 random points per scenario");
  EXPECT_LE(err_intersection, 1e-5);
  EXPECT_LE(err_latency, 1e-5);
}

}  // namespace
