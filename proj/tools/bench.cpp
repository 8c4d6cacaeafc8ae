// Benchmark and verification harness for the branch-MPC solver library.
//
//   bench run    --config <file>   sweep experiments, CSV output
//   bench verify [--suite <name>]  oracle-equivalence suites
//   bench gen    --scenario <name> --out <file>  scenario config dump
//
// The BMPC_OUT_DIR environment variable overrides the directory of relative
// output paths.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <future>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "bmpc/scenarios.hpp"
#include "bmpc/serialization.hpp"
#include "bmpc/solver.hpp"
#include "bmpc/testing/oracles.hpp"
#include "bmpc/testing/verification.hpp"

namespace {

using bmpc::json;

struct RunConfig {
  std::string experiment{"horizon-sweep"};
  std::string solver{"pmsilqr"};
  std::vector<int> horizons;  // per-experiment defaults apply when empty
  std::vector<int> leaf_counts{4};
  std::vector<double> tsh1_values{0.5};
  int repetitions{1};
  unsigned seed{42};
  std::string output{"bench_results.csv"};
  bool parallel_sweep{false};  // opt-in: concurrent sweep points, noisier timings
  bmpc::SolverOptions options;
};

RunConfig parse_run_config(const json& j) {
  RunConfig cfg;
  cfg.experiment = j.value("experiment", cfg.experiment);
  cfg.solver = j.value("solver", cfg.solver);
  cfg.horizons = j.value("horizons", cfg.horizons);
  cfg.leaf_counts = j.value("leaf_counts", cfg.leaf_counts);
  cfg.tsh1_values = j.value("tsh1_values", cfg.tsh1_values);
  cfg.repetitions = j.value("repetitions", cfg.repetitions);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.output = j.value("output", cfg.output);
  cfg.parallel_sweep = j.value("parallel_sweep", cfg.parallel_sweep);
  if (j.contains("options")) cfg.options = bmpc::solver_options_from_json(j.at("options"));
  return cfg;
}

bool apply_solver_name(const std::string& name, bmpc::SolverOptions& opts) {
  if (name == "pmsilqr") {
    opts.backward = bmpc::BackwardStrategy::scan_tree_riccati;
    opts.forward = bmpc::ForwardMode::linear_rollout;
    opts.line_search = bmpc::LineSearchMode::parallel;
  } else if (name == "hypmsilqr") {
    opts.backward = bmpc::BackwardStrategy::scan_condensed;
    opts.forward = bmpc::ForwardMode::linear_rollout;
    opts.line_search = bmpc::LineSearchMode::parallel;
  } else if (name == "smsilqr") {
    opts.backward = bmpc::BackwardStrategy::sequential_riccati;
    opts.forward = bmpc::ForwardMode::linear_rollout;
    opts.line_search = bmpc::LineSearchMode::sequential;
    opts.parallel = false;
  } else if (name == "sssilqr") {
    opts.backward = bmpc::BackwardStrategy::sequential_riccati;
    opts.forward = bmpc::ForwardMode::nonlinear_rollout;
    opts.line_search = bmpc::LineSearchMode::sequential;
    opts.parallel = false;
  } else {
    return false;
  }
  return true;
}

std::pair<int, int> leaf_count_split(int leaves) {
  switch (leaves) {
    case 1: return {1, 1};
    case 2: return {1, 2};
    case 4: return {2, 2};
    case 6: return {2, 3};
    case 9: return {3, 3};
    case 12: return {3, 4};
    default: return {0, 0};
  }
}

std::filesystem::path resolve_output(const std::string& path) {
  std::filesystem::path p(path);
  if (const char* dir = std::getenv("BMPC_OUT_DIR"); dir != nullptr && p.is_relative()) {
    p = std::filesystem::path(dir) / p;
  }
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  return p;
}

/// Post-hoc consistency of a convergence report: the merit weight never
/// decreases and every accepted step satisfied its sufficient-decrease bound.
bool report_consistent(const bmpc::SolveReport& report) {
  double mu_prev = 0.0;
  for (const auto& rec : report.iterations) {
    if (rec.mu + 1e-12 < mu_prev) return false;
    mu_prev = rec.mu;
    if (rec.accepted &&
        rec.merit_after > rec.merit_before + rec.model_decrease +
                              1e-9 * (1.0 + std::abs(rec.merit_before))) {
      return false;
    }
  }
  return true;
}

struct SweepPoint {
  int horizon{0};
  int leaves{0};
  double tsh1{0.0};
  bmpc::BmpcProblem problem;
};

int run_command(const std::string& config_path) {
  json j;
  {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "bench run: cannot open config " << config_path << "\n";
      return 2;
    }
    try {
      in >> j;
    } catch (const std::exception& e) {
      std::cerr << "bench run: bad config JSON: " << e.what() << "\n";
      return 2;
    }
  }
  RunConfig cfg;
  try {
    cfg = parse_run_config(j);
  } catch (const std::exception& e) {
    std::cerr << "bench run: " << e.what() << "\n";
    return 2;
  }
  if (!apply_solver_name(cfg.solver, cfg.options)) {
    std::cerr << "bench run: unknown solver '" << cfg.solver << "'\n";
    return 2;
  }
  if (cfg.repetitions < 1) {
    std::cerr << "bench run: repetitions must be >= 1\n";
    return 2;
  }
  // horizon-sweep falls back to the default grid when no horizons are given.
  const bool sweep_empty = (cfg.experiment == "leaf-sweep" && cfg.leaf_counts.empty()) ||
                           (cfg.experiment == "latency-sweep" && cfg.tsh1_values.empty()) ||
                           (cfg.experiment == "custom" && cfg.leaf_counts.empty());
  if (sweep_empty) {
    std::cerr << "bench run: empty sweep list\n";
    return 2;
  }

  std::vector<SweepPoint> points;
  std::mt19937_64 rng(cfg.seed);
  if (cfg.experiment == "horizon-sweep") {
    if (cfg.horizons.empty()) cfg.horizons = {63, 127, 255, 511};
    for (int N : cfg.horizons) {
      SweepPoint p;
      p.horizon = N;
      p.leaves = 4;
      p.problem = bmpc::build_intersection_case(bmpc::intersection_spec(N), 2, 2);
      points.push_back(std::move(p));
    }
  } else if (cfg.experiment == "leaf-sweep") {
    const int N = cfg.horizons.empty() ? 255 : cfg.horizons[0];
    for (int leaves : cfg.leaf_counts) {
      const auto [v1, v2] = leaf_count_split(leaves);
      if (v1 == 0) {
        std::cerr << "bench run: unsupported leaf count " << leaves << "\n";
        return 2;
      }
      SweepPoint p;
      p.horizon = N;
      p.leaves = leaves;
      p.problem = bmpc::build_intersection_case(bmpc::intersection_spec(N), v1, v2);
      points.push_back(std::move(p));
    }
  } else if (cfg.experiment == "latency-sweep") {
    const int N = cfg.horizons.empty() ? 255 : cfg.horizons[0];
    for (double tsh1 : cfg.tsh1_values) {
      SweepPoint p;
      p.horizon = N;
      p.leaves = 4;
      p.tsh1 = tsh1;
      p.problem = bmpc::build_latency_case(bmpc::latency_spec(tsh1, N));
      points.push_back(std::move(p));
    }
  } else if (cfg.experiment == "custom") {
    // Random linear-quadratic tree instances, reproducible from the seed.
    const int N = cfg.horizons.empty() ? 15 : cfg.horizons[0];
    for (int leaves : cfg.leaf_counts) {
      SweepPoint p;
      p.horizon = N;
      p.leaves = leaves;
      const bmpc::TreeTopology tree =
          leaves > 1 ? bmpc::build_tree(
                           N, {{1, leaves, std::vector<double>(static_cast<size_t>(leaves),
                                                               1.0 / leaves)}})
                     : bmpc::build_tree(N, {});
      p.problem = bmpc::testing::random_lq_problem(rng, tree, 4, 2);
      points.push_back(std::move(p));
    }
  } else {
    std::cerr << "bench run: unknown experiment '" << cfg.experiment << "'\n";
    return 2;
  }

  const auto path = resolve_output(cfg.output);
  std::ofstream csv(path);
  if (!csv) {
    std::cerr << "bench run: cannot write " << path << "\n";
    return 2;
  }
  csv << "experiment,solver,N,leaves,T_sh1,rep,iters,cost,violation,t_setup_ms,t_bp1_ms,"
         "t_bp2_ms,t_fwd_ms,t_ls_ms,t_total_ms,status\n";

  const auto run_point = [&](const SweepPoint& point) {
    std::vector<std::string> lines;
    bmpc::solve(point.problem, cfg.options);  // warm-up repetition, discarded
    for (int rep = 0; rep < cfg.repetitions; ++rep) {
      bmpc::SolveResult res;
      std::string status;
      try {
        res = bmpc::solve(point.problem, cfg.options);
        status = bmpc::to_string(res.report.status);
        if (!report_consistent(res.report)) status = "error";
      } catch (const std::exception& e) {
        status = "error";
        res.report.message = e.what();
      }
      const auto& t = res.report.times;
      char line[512];
      std::snprintf(line, sizeof(line), "%s,%s,%d,%d,%.4g,%d,%d,%.12g,%.6g,%.3f,%.3f,%.3f,%.3f,%.3f,%.3f,%s",
                    cfg.experiment.c_str(), cfg.solver.c_str(), point.horizon, point.leaves,
                    point.tsh1, rep, res.report.inner_iterations, res.report.final_cost,
                    res.report.final_violation, 1e3 * t.setup_s, 1e3 * t.backward_p1_s,
                    1e3 * t.backward_p2_s, 1e3 * t.forward_s, 1e3 * t.line_search_s,
                    1e3 * t.total_s, status.c_str());
      lines.emplace_back(line);
    }
    return lines;
  };
  std::vector<std::vector<std::string>> all_lines(points.size());
  if (cfg.parallel_sweep && points.size() > 1) {
    std::vector<std::future<std::vector<std::string>>> futures;
    futures.reserve(points.size());
    for (const SweepPoint& point : points) {
      futures.push_back(std::async(std::launch::async, run_point, std::cref(point)));
    }
    for (size_t i = 0; i < futures.size(); ++i) all_lines[i] = futures[i].get();
  } else {
    for (size_t i = 0; i < points.size(); ++i) all_lines[i] = run_point(points[i]);
  }
  for (const auto& lines : all_lines) {
    for (const auto& line : lines) {
      csv << line << "\n";
      std::cout << line << "\n";
    }
  }
  std::cout << "wrote " << path.string() << "\n";

  // Non-binding wall-clock note: associative-scan backward pass against the
  // sequential recursion on one long random instance.
  {
    std::mt19937_64 timing_rng(cfg.seed + 1);
    const auto stages = bmpc::testing::random_path(timing_rng, 4, 2, 511);
    const bmpc::ValueFunction terminal = bmpc::testing::random_terminal(timing_rng, 4);
    using clock = std::chrono::steady_clock;
    const auto t0 = clock::now();
    for (int i = 0; i < 5; ++i) bmpc::backward_scan(stages, terminal, bmpc::ScanOrder::tree);
    const auto t1 = clock::now();
    for (int i = 0; i < 5; ++i) bmpc::riccati_path(stages, terminal);
    const auto t2 = clock::now();
    std::printf("timing note (N=511, nx=4, nu=2, single thread): scan backward %.3f ms, "
                "sequential Riccati %.3f ms per solve\n",
                std::chrono::duration<double>(t1 - t0).count() * 200.0,
                std::chrono::duration<double>(t2 - t1).count() * 200.0);
  }
  return 0;
}

int verify_command(const std::vector<std::string>& suites, const std::string& mutate) {
  bmpc::testing::VerifyOptions opts;
  if (!mutate.empty()) {
    if (mutate == "scan-sign") {
      opts.mutate_scan_sign = true;
    } else {
      std::cerr << "bench verify: unknown mutation '" << mutate << "'\n";
      return 2;
    }
  }
  std::vector<std::string> selected = suites;
  if (selected.size() == 1 && selected[0] == "none") {
    std::cout << "no suites selected: trivially passing\n";
    return 0;
  }
  const auto results = bmpc::testing::run_suites(selected, opts);
  if (results.empty()) {
    std::cerr << "bench verify: no suite matches the selection\n";
    return 2;
  }
  bool all_passed = true;
  for (const auto& r : results) {
    std::printf("[%s] %s: max error %.3e (tolerance %.1e)%s%s\n", r.passed ? "PASS" : "FAIL",
                r.name.c_str(), r.max_error, r.tolerance, r.detail.empty() ? "" : ", ",
                r.detail.c_str());
    all_passed = all_passed && r.passed;
  }
  return all_passed ? 0 : 1;
}

int gen_command(const std::string& scenario, const std::string& out) {
  json doc;
  bmpc::ScenarioArtifacts artifacts;
  if (scenario == "intersection") {
    const bmpc::ScenarioSpec spec = bmpc::intersection_spec();
    bmpc::build_intersection_case(spec, 2, 2, &artifacts);
    doc["kind"] = "intersection";
    doc["v1_count"] = 2;
    doc["v2_count"] = 2;
    doc["spec"] = bmpc::scenario_spec_to_json(spec);
  } else if (scenario == "latency") {
    const bmpc::ScenarioSpec spec = bmpc::latency_spec(0.5);
    bmpc::build_latency_case(spec, &artifacts);
    doc["kind"] = "latency";
    doc["spec"] = bmpc::scenario_spec_to_json(spec);
  } else {
    std::cerr << "bench gen: unknown scenario '" << scenario << "'\n";
    return 2;
  }
  doc["problem"] = bmpc::scenario_artifacts_to_json(artifacts);
  const auto path = resolve_output(out);
  std::ofstream f(path);
  if (!f) {
    std::cerr << "bench gen: cannot write " << path << "\n";
    return 2;
  }
  f << doc.dump(2) << "\n";
  std::cout << "wrote " << path.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Branch-MPC solver benchmarks and verification"};
  app.require_subcommand(1);

  std::string config_path;
  CLI::App* run = app.add_subcommand("run", "run a sweep experiment from a JSON config");
  run->add_option("--config", config_path, "JSON run configuration")->required();

  std::vector<std::string> suites;
  std::string mutate;
  CLI::App* verify = app.add_subcommand("verify", "run the oracle-equivalence suites");
  verify->add_option("--suite", suites,
                     "suite selection: scan-riccati, forward, associativity, condensing, "
                     "tree-qp, cross-strategy, all, none");
  verify->add_option("--mutate", mutate, "fault injection for harness sanity (scan-sign)");

  std::string scenario, out_path;
  CLI::App* gen = app.add_subcommand("gen", "generate a scenario config with its problem dump");
  gen->add_option("--scenario", scenario, "intersection or latency")->required();
  gen->add_option("--out", out_path, "output JSON path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(config_path);
    if (verify->parsed()) return verify_command(suites, mutate);
    if (gen->parsed()) return gen_command(scenario, out_path);
  } catch (const std::exception& e) {
    std::cerr << "bench: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
