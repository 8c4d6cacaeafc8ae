#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "bmpc/scenarios.hpp"
#include "bmpc/solver.hpp"
#include "bmpc/tree.hpp"

namespace bmpc {

using json = nlohmann::json;

/// Tree spec: {"horizon": N, "branchings": [{"step", "arity", "weights"}]}.
inline json tree_spec_to_json(const TreeTopology& tree) {
  json branchings = json::array();
  for (const TreeBranching& b : tree.branchings) {
    branchings.push_back({{"step", b.step}, {"arity", b.arity}, {"weights", b.weights}});
  }
  return {{"horizon", tree.horizon}, {"branchings", branchings}};
}

inline TreeTopology tree_from_json(const json& j) {
  std::vector<TreeBranching> branchings;
  for (const auto& b : j.value("branchings", json::array())) {
    TreeBranching tb;
    tb.step = b.at("step").get<int>();
    tb.arity = b.at("arity").get<int>();
    tb.weights = b.at("weights").get<std::vector<double>>();
    branchings.push_back(std::move(tb));
  }
  return build_tree(j.at("horizon").get<int>(), branchings);
}

/// Flat key-value solver options; unknown keys are rejected to catch typos.
inline SolverOptions solver_options_from_json(const json& j) {
  SolverOptions o;
  for (const auto& [key, value] : j.items()) {
    if (key == "backward") {
      const std::string s = value.get<std::string>();
      if (s == "scan-tree-riccati") o.backward = BackwardStrategy::scan_tree_riccati;
      else if (s == "scan-condensed") o.backward = BackwardStrategy::scan_condensed;
      else if (s == "sequential-riccati") o.backward = BackwardStrategy::sequential_riccati;
      else throw std::invalid_argument("unknown backward strategy: " + s);
    } else if (key == "forward") {
      const std::string s = value.get<std::string>();
      if (s == "linear") o.forward = ForwardMode::linear_rollout;
      else if (s == "nonlinear") o.forward = ForwardMode::nonlinear_rollout;
      else throw std::invalid_argument("unknown forward mode: " + s);
    } else if (key == "line_search") {
      const std::string s = value.get<std::string>();
      if (s == "parallel") o.line_search = LineSearchMode::parallel;
      else if (s == "sequential") o.line_search = LineSearchMode::sequential;
      else throw std::invalid_argument("unknown line search mode: " + s);
    } else if (key == "scan_order") {
      const std::string s = value.get<std::string>();
      if (s == "tree") o.scan_order = ScanOrder::tree;
      else if (s == "sequential") o.scan_order = ScanOrder::sequential;
      else throw std::invalid_argument("unknown scan order: " + s);
    } else if (key == "parallel") o.parallel = value.get<bool>();
    else if (key == "max_inner_iterations") o.max_inner_iterations = value.get<int>();
    else if (key == "max_outer_iterations") o.max_outer_iterations = value.get<int>();
    else if (key == "alpha_levels") o.alpha_levels = value.get<int>();
    else if (key == "armijo_beta") o.armijo_beta = value.get<double>();
    else if (key == "merit_gamma") o.merit_gamma = value.get<double>();
    else if (key == "merit_mu0") o.merit_mu0 = value.get<double>();
    else if (key == "merit_mu_init") o.merit_mu_init = value.get<double>();
    else if (key == "defect_epsilon") o.defect_epsilon = value.get<double>();
    else if (key == "tol_defect") o.tol_defect = value.get<double>();
    else if (key == "tol_cost") o.tol_cost = value.get<double>();
    else if (key == "tol_feedforward") o.tol_feedforward = value.get<double>();
    else if (key == "tol_constraint") o.tol_constraint = value.get<double>();
    else if (key == "penalty_init") o.penalty_init = value.get<double>();
    else if (key == "penalty_growth") o.penalty_growth = value.get<double>();
    else if (key == "penalty_max") o.penalty_max = value.get<double>();
    else if (key == "reg_init") o.reg_init = value.get<double>();
    else if (key == "reg_min") o.reg_min = value.get<double>();
    else if (key == "reg_growth") o.reg_growth = value.get<double>();
    else if (key == "reg_decay") o.reg_decay = value.get<double>();
    else if (key == "reg_max") o.reg_max = value.get<double>();
    else throw std::invalid_argument("unknown solver option: " + key);
  }
  return o;
}

/// Convergence report as per-iteration arrays.
inline json report_to_json(const SolveReport& report) {
  json arrays = {{"cost", json::array()},        {"cost_al", json::array()},
                 {"defect_l1", json::array()},   {"violation", json::array()},
                 {"alpha", json::array()},       {"mu", json::array()},
                 {"merit_before", json::array()},{"merit_after", json::array()},
                 {"model_decrease", json::array()}, {"max_feedforward", json::array()},
                 {"regularization", json::array()}, {"accepted", json::array()},
                 {"outer", json::array()}};
  for (const IterationRecord& r : report.iterations) {
    arrays["cost"].push_back(r.cost);
    arrays["cost_al"].push_back(r.cost_al);
    arrays["defect_l1"].push_back(r.defect_l1);
    arrays["violation"].push_back(r.violation);
    arrays["alpha"].push_back(r.alpha);
    arrays["mu"].push_back(r.mu);
    arrays["merit_before"].push_back(r.merit_before);
    arrays["merit_after"].push_back(r.merit_after);
    arrays["model_decrease"].push_back(r.model_decrease);
    arrays["max_feedforward"].push_back(r.max_feedforward);
    arrays["regularization"].push_back(r.regularization);
    arrays["accepted"].push_back(r.accepted);
    arrays["outer"].push_back(r.outer);
  }
  return {{"status", to_string(report.status)},
          {"message", report.message},
          {"inner_iterations", report.inner_iterations},
          {"outer_iterations", report.outer_iterations},
          {"final_cost", report.final_cost},
          {"final_violation", report.final_violation},
          {"final_defect_l1", report.final_defect_l1},
          {"iterations", arrays},
          {"times",
           {{"setup_s", report.times.setup_s},
            {"backward_p1_s", report.times.backward_p1_s},
            {"backward_p2_s", report.times.backward_p2_s},
            {"forward_s", report.times.forward_s},
            {"line_search_s", report.times.line_search_s},
            {"total_s", report.times.total_s}}}};
}

inline json scenario_spec_to_json(const ScenarioSpec& spec) {
  json vehicles = json::array();
  for (const SurroundingVehicle& v : spec.vehicles) {
    vehicles.push_back({{"position", {v.position(0), v.position(1)}},
                        {"heading", v.heading},
                        {"speed", v.speed},
                        {"target_speeds", v.target_speeds}});
  }
  return {{"total_time", spec.total_time},
          {"shared_times", spec.shared_times},
          {"horizon", spec.horizon},
          {"ego_start", {spec.ego_start(0), spec.ego_start(1), spec.ego_start(2), spec.ego_start(3)}},
          {"vehicles", vehicles},
          {"state_weights",
           {spec.state_weights(0), spec.state_weights(1), spec.state_weights(2), spec.state_weights(3)}},
          {"input_weights", {spec.input_weights(0), spec.input_weights(1)}},
          {"terminal_weights",
           {spec.terminal_weights(0), spec.terminal_weights(1), spec.terminal_weights(2),
            spec.terminal_weights(3)}},
          {"accel_limit", spec.accel_limit},
          {"yaw_rate_limit", spec.yaw_rate_limit},
          {"safety_radius", spec.safety_radius},
          {"prediction_tau", spec.prediction_tau},
          {"reference_turn_rate", spec.reference_turn_rate},
          {"backup_deceleration", spec.backup_deceleration},
          {"continue_deceleration", spec.continue_deceleration}};
}

inline ScenarioSpec scenario_spec_from_json(const json& j) {
  ScenarioSpec spec;
  spec.total_time = j.value("total_time", spec.total_time);
  spec.shared_times = j.value("shared_times", spec.shared_times);
  spec.horizon = j.value("horizon", spec.horizon);
  if (j.contains("ego_start")) {
    const auto v = j.at("ego_start").get<std::vector<double>>();
    spec.ego_start = Eigen::Vector4d(v.at(0), v.at(1), v.at(2), v.at(3));
  }
  if (j.contains("vehicles")) {
    spec.vehicles.clear();
    for (const auto& jv : j.at("vehicles")) {
      SurroundingVehicle v;
      const auto pos = jv.at("position").get<std::vector<double>>();
      v.position = Eigen::Vector2d(pos.at(0), pos.at(1));
      v.heading = jv.at("heading").get<double>();
      v.speed = jv.at("speed").get<double>();
      v.target_speeds = jv.at("target_speeds").get<std::vector<double>>();
      spec.vehicles.push_back(std::move(v));
    }
  }
  const auto read_vec4 = [&](const char* key, Eigen::Vector4d& out) {
    if (j.contains(key)) {
      const auto v = j.at(key).get<std::vector<double>>();
      out = Eigen::Vector4d(v.at(0), v.at(1), v.at(2), v.at(3));
    }
  };
  read_vec4("state_weights", spec.state_weights);
  read_vec4("terminal_weights", spec.terminal_weights);
  if (j.contains("input_weights")) {
    const auto v = j.at("input_weights").get<std::vector<double>>();
    spec.input_weights = Eigen::Vector2d(v.at(0), v.at(1));
  }
  spec.accel_limit = j.value("accel_limit", spec.accel_limit);
  spec.yaw_rate_limit = j.value("yaw_rate_limit", spec.yaw_rate_limit);
  spec.safety_radius = j.value("safety_radius", spec.safety_radius);
  spec.prediction_tau = j.value("prediction_tau", spec.prediction_tau);
  spec.reference_turn_rate = j.value("reference_turn_rate", spec.reference_turn_rate);
  spec.backup_deceleration = j.value("backup_deceleration", spec.backup_deceleration);
  spec.continue_deceleration = j.value("continue_deceleration", spec.continue_deceleration);
  return spec;
}

/// Full reproducibility dump of a generated problem: topology, per-node
/// probability weights, references, and predicted vehicle positions.
inline json scenario_artifacts_to_json(const ScenarioArtifacts& art) {
  json nodes = json::array();
  for (int i = 0; i < art.tree.node_count; ++i) {
    json vehicles = json::array();
    for (const auto& p : art.vehicle_position[static_cast<size_t>(i)]) {
      vehicles.push_back({p(0), p(1)});
    }
    json ref = json::array();
    for (int k = 0; k < art.reference[static_cast<size_t>(i)].size(); ++k) {
      ref.push_back(art.reference[static_cast<size_t>(i)](k));
    }
    nodes.push_back({{"step", art.tree.time_step[static_cast<size_t>(i)]},
                     {"parent", art.tree.parent[static_cast<size_t>(i)]},
                     {"weight", art.tree.weight[static_cast<size_t>(i)]},
                     {"reference", ref},
                     {"vehicles", vehicles}});
  }
  return {{"tree", tree_spec_to_json(art.tree)}, {"nodes", nodes}};
}

}  // namespace bmpc
