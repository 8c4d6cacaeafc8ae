#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace bmpc {

/// One branching event: every node at `step` gets `arity` children whose
/// conditional probabilities are `weights` (positive, summing to one).
struct TreeBranching {
  int step{0};
  int arity{2};
  std::vector<double> weights;
};

/// Root-to-leaf node index sequence.
struct TreePath {
  std::vector<int> nodes;
};

/// Balanced scenario tree over a fixed horizon. Node 0 is the root; indexing
/// is breadth-first so the nodes of each time step form a contiguous slice.
/// Immutable after construction; safe to share read-only across threads.
struct TreeTopology {
  int node_count{0};
  int horizon{0};           // N: every leaf sits at this step
  int last_branch_step{-1};  // N_b; -1 when the tree is a single path
  std::vector<int> parent;     // -1 for the root
  std::vector<int> time_step;
  std::vector<double> weight;  // path probability of the node; root = 1
  std::vector<std::vector<int>> children;
  std::vector<int> leaves;      // ascending node indices
  std::vector<int> step_begin;  // size horizon+2; nodes at step k are [step_begin[k], step_begin[k+1])
  std::vector<TreeBranching> branchings;  // construction spec, kept for serialization

  bool is_leaf(int i) const { return children[static_cast<size_t>(i)].empty(); }
  int leaf_count() const { return static_cast<int>(leaves.size()); }
  int nodes_at_step_begin(int k) const { return step_begin[static_cast<size_t>(k)]; }
  int nodes_at_step_end(int k) const { return step_begin[static_cast<size_t>(k) + 1]; }
};

/// Nodes whose time step equals k, as a list of indices.
inline std::vector<int> nodes_at_step(const TreeTopology& tree, int k) {
  if (k < 0 || k > tree.horizon) {
    throw std::out_of_range("nodes_at_step: step " + std::to_string(k) +
                            " outside [0, " + std::to_string(tree.horizon) + "]");
  }
  std::vector<int> out;
  for (int i = tree.nodes_at_step_begin(k); i < tree.nodes_at_step_end(k); ++i) {
    out.push_back(i);
  }
  return out;
}

/// Builds a balanced tree: all leaves at step `horizon`, branchings applied
/// to every node alive at the given step.
inline TreeTopology build_tree(int horizon, const std::vector<TreeBranching>& branchings) {
  if (horizon < 1) throw std::invalid_argument("build_tree: horizon must be >= 1");
  for (size_t b = 0; b < branchings.size(); ++b) {
    const TreeBranching& br = branchings[b];
    if (br.step < 0 || br.step >= horizon) {
      throw std::invalid_argument("build_tree: branching step " + std::to_string(br.step) +
                                  " must lie in [0, horizon)");
    }
    if (b > 0 && br.step <= branchings[b - 1].step) {
      throw std::invalid_argument("build_tree: branching steps must be strictly increasing");
    }
    if (br.arity < 2 || static_cast<int>(br.weights.size()) != br.arity) {
      throw std::invalid_argument("build_tree: branching needs arity >= 2 and one weight per child");
    }
    double sum = 0.0;
    for (double w : br.weights) {
      if (!(w > 0.0)) throw std::invalid_argument("build_tree: branch weights must be positive");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw std::invalid_argument("build_tree: branch weights must sum to 1, got " + std::to_string(sum));
    }
  }

  TreeTopology tree;
  tree.horizon = horizon;
  tree.branchings = branchings;
  tree.step_begin.assign(static_cast<size_t>(horizon) + 2, 0);

  tree.parent.push_back(-1);
  tree.time_step.push_back(0);
  tree.weight.push_back(1.0);
  std::vector<int> level{0};

  size_t next_branch = 0;
  for (int k = 0; k < horizon; ++k) {
    tree.step_begin[static_cast<size_t>(k) + 1] = static_cast<int>(tree.parent.size());
    const TreeBranching* br = nullptr;
    if (next_branch < branchings.size() && branchings[next_branch].step == k) {
      br = &branchings[next_branch];
      ++next_branch;
    }
    std::vector<int> next_level;
    for (int node : level) {
      const int arity = br ? br->arity : 1;
      for (int a = 0; a < arity; ++a) {
        const int child = static_cast<int>(tree.parent.size());
        tree.parent.push_back(node);
        tree.time_step.push_back(k + 1);
        tree.weight.push_back(tree.weight[static_cast<size_t>(node)] * (br ? br->weights[static_cast<size_t>(a)] : 1.0));
        next_level.push_back(child);
      }
    }
    level = std::move(next_level);
  }
  tree.node_count = static_cast<int>(tree.parent.size());
  tree.step_begin[static_cast<size_t>(horizon) + 1] = tree.node_count;

  tree.children.assign(static_cast<size_t>(tree.node_count), {});
  for (int i = 1; i < tree.node_count; ++i) {
    tree.children[static_cast<size_t>(tree.parent[static_cast<size_t>(i)])].push_back(i);
  }
  for (int i = 0; i < tree.node_count; ++i) {
    if (tree.children[static_cast<size_t>(i)].empty()) tree.leaves.push_back(i);
  }
  tree.last_branch_step = branchings.empty() ? -1 : branchings.back().step;
  return tree;
}

/// One path per leaf, ordered by leaf index; shared prefixes are identical
/// index sequences.
inline std::vector<TreePath> flatten(const TreeTopology& tree) {
  std::vector<TreePath> paths;
  paths.reserve(tree.leaves.size());
  for (int leaf : tree.leaves) {
    TreePath path;
    for (int i = leaf; i >= 0; i = tree.parent[static_cast<size_t>(i)]) path.nodes.push_back(i);
    std::reverse(path.nodes.begin(), path.nodes.end());
    paths.push_back(std::move(path));
  }
  return paths;
}

/// Number of leaves below each node (a leaf counts itself).
inline std::vector<int> descendant_leaf_counts(const TreeTopology& tree) {
  std::vector<int> count(static_cast<size_t>(tree.node_count), 0);
  for (int i = tree.node_count - 1; i >= 0; --i) {
    if (tree.is_leaf(i)) {
      count[static_cast<size_t>(i)] = 1;
    } else {
      for (int ch : tree.children[static_cast<size_t>(i)]) count[static_cast<size_t>(i)] += count[static_cast<size_t>(ch)];
    }
  }
  return count;
}

/// States indexed by node; inputs indexed by non-leaf node (leaves hold an
/// empty vector).
struct TrajectoryTree {
  std::vector<Eigen::VectorXd> state;
  std::vector<Eigen::VectorXd> input;

  static TrajectoryTree Zero(const TreeTopology& tree, int nx, int nu) {
    TrajectoryTree t;
    t.state.assign(static_cast<size_t>(tree.node_count), Eigen::VectorXd::Zero(nx));
    t.input.resize(static_cast<size_t>(tree.node_count));
    for (int i = 0; i < tree.node_count; ++i) {
      t.input[static_cast<size_t>(i)] =
          tree.is_leaf(i) ? Eigen::VectorXd() : Eigen::VectorXd::Zero(nu);
    }
    return t;
  }
};

}  // namespace bmpc
