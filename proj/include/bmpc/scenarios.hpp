#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "bmpc/problem.hpp"
#include "bmpc/tree.hpp"
#include "bmpc/unicycle.hpp"

namespace bmpc {

/// A surrounding vehicle predicted with constant heading and first-order
/// convergence of its speed toward a per-scenario target.
struct SurroundingVehicle {
  Eigen::Vector2d position{0.0, 0.0};
  double heading{0.0};
  double speed{0.0};
  std::vector<double> target_speeds;  // one entry per decision option
};

/// Case-study description: timing, tree shape, surrounding traffic, and the
/// tuning defaults (tracking weights, input bounds, safety radius).
struct ScenarioSpec {
  double total_time{10.0};
  std::vector<double> shared_times{0.1};  // one branching time, or two
  int horizon{63};
  std::vector<int> arities;  // per branching; filled by the builders

  Eigen::Vector4d ego_start{0.0, -20.0, M_PI / 2.0, 5.0};
  std::vector<SurroundingVehicle> vehicles;

  Eigen::Vector4d state_weights{1.0, 1.0, 0.1, 0.1};
  Eigen::Vector2d input_weights{0.5, 0.5};
  Eigen::Vector4d terminal_weights{1.0, 1.0, 0.1, 0.1};
  double accel_limit{3.0};
  double yaw_rate_limit{0.5};
  double safety_radius{3.0};
  double prediction_tau{1.5};

  double reference_turn_rate{0.4};     // intersection: left-turn yaw rate
  double backup_deceleration{3.0};     // latency: hard-stop reference decel
  double continue_deceleration{2.5};   // latency: car-following reference decel

  double dt() const { return total_time / horizon; }
};

/// Per-node data the builders derive from a spec; kept for reproducibility
/// dumps and plotting.
struct ScenarioArtifacts {
  TreeTopology tree;
  std::vector<VectorXd> reference;                             // per node
  std::vector<std::vector<Eigen::Vector2d>> vehicle_position;  // per node, per vehicle
};

namespace detail {

/// Child-index choices per node, one entry per branching; -1 before the
/// branching happens on the node's path.
inline std::vector<std::vector<int>> branch_choices(const TreeTopology& tree) {
  const size_t nb = tree.branchings.size();
  std::vector<std::vector<int>> choices(static_cast<size_t>(tree.node_count),
                                        std::vector<int>(nb, -1));
  for (int i = 0; i < tree.node_count; ++i) {
    const auto& kids = tree.children[static_cast<size_t>(i)];
    for (size_t c = 0; c < kids.size(); ++c) {
      choices[static_cast<size_t>(kids[c])] = choices[static_cast<size_t>(i)];
      for (size_t b = 0; b < nb; ++b) {
        if (tree.branchings[b].step == tree.time_step[static_cast<size_t>(i)]) {
          choices[static_cast<size_t>(kids[c])][b] = static_cast<int>(c);
        }
      }
    }
  }
  return choices;
}

struct VehicleNodeState {
  Eigen::Vector2d position;
  double speed;
};

/// Propagates every vehicle down the tree. `target_of(vehicle, node)` maps a
/// node to the vehicle's active speed target; the switch happens at the
/// children of a branch node, where the decision is revealed.
template <class TargetFn>
std::vector<std::vector<VehicleNodeState>> predict_vehicles(const TreeTopology& tree,
                                                            const ScenarioSpec& spec,
                                                            const TargetFn& target_of) {
  const size_t nv = spec.vehicles.size();
  std::vector<std::vector<VehicleNodeState>> states(
      static_cast<size_t>(tree.node_count), std::vector<VehicleNodeState>(nv));
  for (size_t v = 0; v < nv; ++v) {
    states[0][v] = {spec.vehicles[v].position, spec.vehicles[v].speed};
  }
  const double dt = spec.dt();
  for (int i = 0; i < tree.node_count; ++i) {
    for (int ch : tree.children[static_cast<size_t>(i)]) {
      for (size_t v = 0; v < nv; ++v) {
        const SurroundingVehicle& veh = spec.vehicles[v];
        const VehicleNodeState& cur = states[static_cast<size_t>(i)][v];
        const double target = target_of(v, ch);
        VehicleNodeState next;
        next.position = cur.position +
                        dt * cur.speed * Eigen::Vector2d(std::cos(veh.heading), std::sin(veh.heading));
        next.speed = cur.speed + dt * (target - cur.speed) / spec.prediction_tau;
        states[static_cast<size_t>(ch)][v] = next;
      }
    }
  }
  return states;
}

inline NodeDynamics unicycle_dynamics(double dt) {
  NodeDynamics dyn;
  dyn.value = [dt](const VectorXd& x, const VectorXd& u) { return unicycle::step(x, u, dt); };
  dyn.jacobians = [dt](const VectorXd& x, const VectorXd& u, MatrixXd& A, MatrixXd& B) {
    unicycle::step_jacobians(x, u, dt, A, B);
  };
  return dyn;
}

/// Input box rows followed by one smoothed-distance row per vehicle:
///   g = [a - a_max; -a - a_max; w - w_max; -w - w_max;
///        r - sqrt(|p - p_v|^2 + eps) ...] <= 0.
/// The smoothed distance keeps a unit-magnitude gradient even when an
/// iterate sits deep inside the safety disc, where the squared form stalls.
inline NodeConstraint ego_constraints(const ScenarioSpec& spec,
                                      const std::vector<Eigen::Vector2d>& vehicles, bool with_input) {
  NodeConstraint con;
  const int n_box = with_input ? 4 : 0;
  con.dim = n_box + static_cast<int>(vehicles.size());
  const double a_max = spec.accel_limit;
  const double w_max = spec.yaw_rate_limit;
  const double radius = spec.safety_radius;
  constexpr double kEps = 1e-6;
  con.value = [=](const VectorXd& x, const VectorXd& u) {
    VectorXd g(n_box + static_cast<int>(vehicles.size()));
    if (n_box > 0) {
      g(0) = u(0) - a_max;
      g(1) = -u(0) - a_max;
      g(2) = u(1) - w_max;
      g(3) = -u(1) - w_max;
    }
    for (size_t v = 0; v < vehicles.size(); ++v) {
      const double dx = x(0) - vehicles[v](0);
      const double dy = x(1) - vehicles[v](1);
      g(n_box + static_cast<int>(v)) = radius - std::sqrt(dx * dx + dy * dy + kEps);
    }
    return g;
  };
  con.jacobians = [=](const VectorXd& x, const VectorXd&, MatrixXd& Jx, MatrixXd& Ju) {
    Jx.setZero();
    Ju.setZero();
    if (n_box > 0) {
      Ju(0, 0) = 1.0;
      Ju(1, 0) = -1.0;
      Ju(2, 1) = 1.0;
      Ju(3, 1) = -1.0;
    }
    for (size_t v = 0; v < vehicles.size(); ++v) {
      const double dx = x(0) - vehicles[v](0);
      const double dy = x(1) - vehicles[v](1);
      const double dist = std::sqrt(dx * dx + dy * dy + kEps);
      Jx(n_box + static_cast<int>(v), 0) = -dx / dist;
      Jx(n_box + static_cast<int>(v), 1) = -dy / dist;
    }
  };
  return con;
}

}  // namespace detail

/// Default intersection setup: the ego turns left across an oncoming vehicle
/// while following a slower lead vehicle; both surrounding vehicles hold a
/// one-stage decision over their speed targets.
inline ScenarioSpec intersection_spec(int horizon = 63, double total_time = 10.0,
                                      double shared_time = 0.1) {
  ScenarioSpec spec;
  spec.total_time = total_time;
  spec.shared_times = {shared_time};
  spec.horizon = horizon;
  spec.ego_start = Eigen::Vector4d(0.0, -20.0, M_PI / 2.0, 5.0);
  SurroundingVehicle oncoming;
  oncoming.position = Eigen::Vector2d(-3.5, 30.0);
  oncoming.heading = -M_PI / 2.0;
  oncoming.speed = 8.0;
  oncoming.target_speeds = {8.0, 2.0, 5.0, 3.5};
  SurroundingVehicle lead;
  lead.position = Eigen::Vector2d(0.0, -10.0);
  lead.heading = M_PI / 2.0;
  lead.speed = 5.0;
  lead.target_speeds = {5.0, 1.0, 3.0, 2.0};
  spec.vehicles = {oncoming, lead};
  return spec;
}

/// Left-turn reference: drive straight, turn left at constant yaw rate until
/// the heading gains a quarter circle, then continue straight.
inline std::vector<VectorXd> left_turn_reference(const ScenarioSpec& spec) {
  std::vector<VectorXd> ref(static_cast<size_t>(spec.horizon) + 1);
  VectorXd x = spec.ego_start;
  const double psi_end = spec.ego_start(2) + M_PI / 2.0;
  const double turn_radius = spec.ego_start(3) / spec.reference_turn_rate;
  const double turn_start_y = -turn_radius;
  for (int k = 0; k <= spec.horizon; ++k) {
    ref[static_cast<size_t>(k)] = x;
    double omega = 0.0;
    if (x(1) >= turn_start_y && x(2) < psi_end) omega = spec.reference_turn_rate;
    x = unicycle::step(x, Eigen::Vector2d(0.0, omega), spec.dt());
  }
  return ref;
}

/// One-stage decision process: a single branching at round(T_sh / dt) into
/// v1_count * v2_count scenarios with uniform weights, each fixing a speed
/// target per surrounding vehicle.
inline BmpcProblem build_intersection_case(const ScenarioSpec& spec, int v1_count, int v2_count,
                                           ScenarioArtifacts* artifacts = nullptr) {
  const int leaves = v1_count * v2_count;
  const bool valid_count =
      leaves == 1 || leaves == 2 || leaves == 4 || leaves == 6 || leaves == 9 || leaves == 12;
  if (!valid_count || v1_count < 1 || v2_count < 1) {
    throw std::invalid_argument("build_intersection_case: leaf count " + std::to_string(leaves) +
                                " not in {1, 2, 4, 6, 9, 12}");
  }
  if (spec.vehicles.size() != 2 ||
      static_cast<int>(spec.vehicles[0].target_speeds.size()) < v1_count ||
      static_cast<int>(spec.vehicles[1].target_speeds.size()) < v2_count) {
    throw std::invalid_argument("build_intersection_case: need 2 vehicles with enough targets");
  }

  const int branch_step =
      static_cast<int>(std::lround(spec.shared_times.at(0) / spec.dt()));
  std::vector<TreeBranching> branchings;
  if (leaves > 1) {
    if (branch_step < 0 || branch_step >= spec.horizon) {
      throw std::invalid_argument("build_intersection_case: shared time outside the horizon");
    }
    branchings.push_back({std::max(branch_step, 0), leaves,
                          std::vector<double>(static_cast<size_t>(leaves), 1.0 / leaves)});
  }
  const TreeTopology tree = build_tree(spec.horizon, branchings);
  const auto choices = detail::branch_choices(tree);

  // Scenario s decodes as (s / v2_count, s % v2_count); before the branching
  // the vehicles keep their current speed.
  const auto target_of = [&](size_t vehicle, int node) {
    const int s = choices[static_cast<size_t>(node)].empty() ? -1 : choices[static_cast<size_t>(node)][0];
    if (s < 0) return spec.vehicles[vehicle].speed;
    const int option = vehicle == 0 ? s / v2_count : s % v2_count;
    return spec.vehicles[vehicle].target_speeds[static_cast<size_t>(option)];
  };
  const auto vehicle_states = detail::predict_vehicles(tree, spec, target_of);
  const auto reference = left_turn_reference(spec);

  BmpcProblem problem;
  problem.tree = tree;
  problem.state_dim = unicycle::kStateDim;
  problem.input_dim = unicycle::kInputDim;
  problem.initial_state = spec.ego_start;
  problem.dynamics.resize(static_cast<size_t>(tree.node_count));
  problem.cost.resize(static_cast<size_t>(tree.node_count));
  problem.terminal_cost.resize(static_cast<size_t>(tree.node_count));
  problem.constraint.resize(static_cast<size_t>(tree.node_count));

  const MatrixXd Wx = spec.state_weights.asDiagonal();
  const MatrixXd Wu = spec.input_weights.asDiagonal();
  const MatrixXd Wf = spec.terminal_weights.asDiagonal();
  if (artifacts) {
    artifacts->tree = tree;
    artifacts->reference.resize(static_cast<size_t>(tree.node_count));
    artifacts->vehicle_position.resize(static_cast<size_t>(tree.node_count));
  }
  for (int i = 0; i < tree.node_count; ++i) {
    const int k = tree.time_step[static_cast<size_t>(i)];
    std::vector<Eigen::Vector2d> positions;
    for (const auto& vs : vehicle_states[static_cast<size_t>(i)]) positions.push_back(vs.position);
    if (tree.is_leaf(i)) {
      problem.terminal_cost[static_cast<size_t>(i)] =
          tracking_terminal_cost(reference[static_cast<size_t>(k)], Wf);
      problem.constraint[static_cast<size_t>(i)] = detail::ego_constraints(spec, positions, false);
    } else {
      problem.dynamics[static_cast<size_t>(i)] = detail::unicycle_dynamics(spec.dt());
      problem.cost[static_cast<size_t>(i)] = tracking_cost(reference[static_cast<size_t>(k)], Wx, Wu);
      problem.constraint[static_cast<size_t>(i)] = detail::ego_constraints(spec, positions, true);
    }
    if (artifacts) {
      artifacts->reference[static_cast<size_t>(i)] = reference[static_cast<size_t>(k)];
      artifacts->vehicle_position[static_cast<size_t>(i)] = positions;
    }
  }
  return problem;
}

/// Default latency setup: the ego cruises behind a lead vehicle; the first
/// branching reveals whether the lead brakes, the second the planner's
/// continue-or-backup decision.
inline ScenarioSpec latency_spec(double shared_time_1, int horizon = 255, double total_time = 5.0,
                                 double shared_time_0 = 0.05) {
  ScenarioSpec spec;
  spec.total_time = total_time;
  spec.shared_times = {shared_time_0, shared_time_1};
  spec.horizon = horizon;
  spec.ego_start = Eigen::Vector4d(0.0, 0.0, 0.0, 10.0);
  SurroundingVehicle lead;
  lead.position = Eigen::Vector2d(30.0, 0.0);
  lead.heading = 0.0;
  lead.speed = 8.0;
  lead.target_speeds = {8.0, 0.0};  // keep cruising / brake to a stop
  spec.vehicles = {lead};
  return spec;
}

/// Two-branching tree (arity 2 each, 4 leaves) at rounds of the two shared
/// times. The first branching reveals whether the lead vehicle brakes; the
/// second is the planner decision. In braking-lead branches the "continue"
/// decision tracks a car-following mild deceleration and "backup" a hard
/// stop; with a cruising lead both decisions keep the cruise reference.
inline BmpcProblem build_latency_case(const ScenarioSpec& spec,
                                      ScenarioArtifacts* artifacts = nullptr) {
  if (spec.shared_times.size() != 2 || !(spec.shared_times[0] < spec.shared_times[1]) ||
      !(spec.shared_times[1] < spec.total_time)) {
    throw std::invalid_argument("build_latency_case: need T_sh0 < T_sh1 < T");
  }
  if (spec.vehicles.size() != 1 || spec.vehicles[0].target_speeds.size() != 2) {
    throw std::invalid_argument("build_latency_case: need one vehicle with 2 targets");
  }
  const int k0 = static_cast<int>(std::lround(spec.shared_times[0] / spec.dt()));
  const int k1 = static_cast<int>(std::lround(spec.shared_times[1] / spec.dt()));
  if (k0 < 0 || k0 >= k1 || k1 >= spec.horizon) {
    throw std::invalid_argument("build_latency_case: branch steps must satisfy 0 <= k0 < k1 < N");
  }
  const TreeTopology tree =
      build_tree(spec.horizon, {{k0, 2, {0.5, 0.5}}, {k1, 2, {0.5, 0.5}}});
  const auto choices = detail::branch_choices(tree);

  // Lead target: decided at the first branching.
  const auto target_of = [&](size_t, int node) {
    const int s = choices[static_cast<size_t>(node)][0];
    return s < 0 ? spec.vehicles[0].speed : spec.vehicles[0].target_speeds[static_cast<size_t>(s)];
  };
  const auto vehicle_states = detail::predict_vehicles(tree, spec, target_of);

  // Per-node reference: cruise until the planner decision; in braking-lead
  // branches decelerate afterwards, mildly for "continue", hard for "backup".
  const double dt = spec.dt();
  std::vector<VectorXd> reference(static_cast<size_t>(tree.node_count));
  reference[0] = spec.ego_start;
  for (int i = 0; i < tree.node_count; ++i) {
    for (int ch : tree.children[static_cast<size_t>(i)]) {
      VectorXd r = reference[static_cast<size_t>(i)];
      const bool lead_brakes = choices[static_cast<size_t>(ch)][0] == 1;
      const int decision = choices[static_cast<size_t>(ch)][1];
      double decel = 0.0;
      if (lead_brakes && decision == 0) decel = spec.continue_deceleration;
      if (lead_brakes && decision == 1) decel = spec.backup_deceleration;
      const double v_ref = std::max(0.0, r(3) - decel * dt);
      r(0) += dt * 0.5 * (r(3) + v_ref);  // trapezoidal position update
      r(3) = v_ref;
      reference[static_cast<size_t>(ch)] = r;
    }
  }

  BmpcProblem problem;
  problem.tree = tree;
  problem.state_dim = unicycle::kStateDim;
  problem.input_dim = unicycle::kInputDim;
  problem.initial_state = spec.ego_start;
  problem.dynamics.resize(static_cast<size_t>(tree.node_count));
  problem.cost.resize(static_cast<size_t>(tree.node_count));
  problem.terminal_cost.resize(static_cast<size_t>(tree.node_count));
  problem.constraint.resize(static_cast<size_t>(tree.node_count));

  const MatrixXd Wx = spec.state_weights.asDiagonal();
  const MatrixXd Wu = spec.input_weights.asDiagonal();
  const MatrixXd Wf = spec.terminal_weights.asDiagonal();
  if (artifacts) {
    artifacts->tree = tree;
    artifacts->reference.resize(static_cast<size_t>(tree.node_count));
    artifacts->vehicle_position.resize(static_cast<size_t>(tree.node_count));
  }
  for (int i = 0; i < tree.node_count; ++i) {
    std::vector<Eigen::Vector2d> positions{vehicle_states[static_cast<size_t>(i)][0].position};
    if (tree.is_leaf(i)) {
      problem.terminal_cost[static_cast<size_t>(i)] =
          tracking_terminal_cost(reference[static_cast<size_t>(i)], Wf);
      problem.constraint[static_cast<size_t>(i)] = detail::ego_constraints(spec, positions, false);
    } else {
      problem.dynamics[static_cast<size_t>(i)] = detail::unicycle_dynamics(dt);
      problem.cost[static_cast<size_t>(i)] =
          tracking_cost(reference[static_cast<size_t>(i)], Wx, Wu);
      problem.constraint[static_cast<size_t>(i)] = detail::ego_constraints(spec, positions, true);
    }
    if (artifacts) {
      artifacts->reference[static_cast<size_t>(i)] = reference[static_cast<size_t>(i)];
      artifacts->vehicle_position[static_cast<size_t>(i)] = positions;
    }
  }
  return problem;
}

}  // namespace bmpc
