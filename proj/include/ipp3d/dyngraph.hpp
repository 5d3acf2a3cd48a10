#pragma once

#include "ipp3d/action.hpp"
#include "ipp3d/belief.hpp"
#include "ipp3d/gp.hpp"
#include "ipp3d/random.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <vector>

namespace ipp3d {

struct GraphConfig {
  int positions = 20;              // K
  double neighbourhood = 0.4;      // C, half-width of the sampling cube
  double yaw_change_cost = 0.1;    // C_s
  int draws_per_position = 200;
  int max_halvings = 3;
};

inline constexpr int kNodeFeatures = 6;

// Fully connected local action graph. Nodes come in groups of kNumYaws that
// share one position; group 0 is the robot's current position.
struct DynGraph {
  std::vector<Action> nodes;
  Eigen::MatrixXd features;    // L x 6: x, y, z, yaw / 2pi, mean, variance
  Eigen::MatrixXd edge_costs;  // L x L
  int current_index = -1;      // node equal to the current pose, -1 if absent

  int size() const { return static_cast<int>(nodes.size()); }

  // Cost of moving from the current pose to each node.
  Eigen::VectorXd current_costs() const { return edge_costs.row(current_index).transpose(); }
  Eigen::Matrix<double, 1, kNodeFeatures> current_features() const { return features.row(current_index); }
};

// Uniform draws from the cube of half-width `c` around `current` (clipped to
// the unit cube) that land in known-free voxels and are straight-line
// reachable. Falls back to smaller cubes, then to the current position.
inline std::vector<Eigen::Vector3d> sample_candidates(const BeliefState& belief, const Eigen::Vector3d& current, int k,
                                                      double c, Rng& rng, int draws_per_position = 200,
                                                      int max_halvings = 3) {
  std::vector<Eigen::Vector3d> out;
  out.reserve(k);
  for (int round = 0; round <= max_halvings; ++round, c *= 0.5) {
    out.clear();
    const Eigen::Vector3d lo = (current.array() - c).max(0.0).matrix();
    const Eigen::Vector3d hi = (current.array() + c).min(1.0).matrix();
    const long budget = static_cast<long>(draws_per_position) * k;
    for (long draw = 0; draw < budget && static_cast<int>(out.size()) < k; ++draw) {
      const Eigen::Vector3d p(uniform(rng, lo.x(), hi.x()), uniform(rng, lo.y(), hi.y()), uniform(rng, lo.z(), hi.z()));
      if (belief.occ.at(p) == Occupancy::free && reachable(belief, current, p)) out.push_back(p);
    }
    if (static_cast<int>(out.size()) == k) return out;
  }
  return std::vector<Eigen::Vector3d>(static_cast<std::size_t>(k), current);
}

inline Eigen::MatrixXd node_features(std::span<const Action> nodes, const GPModel& gp) {
  const auto post = gp.posterior_diag(nodes);
  Eigen::MatrixXd f(static_cast<Eigen::Index>(nodes.size()), kNodeFeatures);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& a = nodes[i];
    f.row(i) << a.pos.x(), a.pos.y(), a.pos.z(), a.yaw.normalized(), post.mean(i), post.var(i);
  }
  return f;
}

inline Eigen::MatrixXd edge_cost_matrix(std::span<const Action> nodes, double yaw_change_cost) {
  const auto n = static_cast<Eigen::Index>(nodes.size());
  Eigen::MatrixXd c(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) c(i, j) = edge_cost(nodes[i], nodes[j], yaw_change_cost);
  return c;
}

// Assembles a graph over explicit positions; positions[0] must be the current
// position for current_index to be set.
inline DynGraph make_graph(const std::vector<Eigen::Vector3d>& positions, const Action& current, const GPModel& gp,
                           double yaw_change_cost) {
  DynGraph g;
  g.nodes.reserve(positions.size() * kNumYaws);
  for (const auto& p : positions)
    for (Yaw y : kAllYaws) g.nodes.push_back({p, y});
  for (int i = 0; i < g.size(); ++i) {
    if (g.nodes[i] == current) {
      g.current_index = i;
      break;
    }
  }
  g.features = node_features(g.nodes, gp);
  g.edge_costs = edge_cost_matrix(g.nodes, yaw_change_cost);
  return g;
}

inline DynGraph build_graph(const BeliefState& belief, const Action& current, const GPModel& gp,
                            const GraphConfig& cfg, Rng& rng) {
  std::vector<Eigen::Vector3d> positions{current.pos};
  if (cfg.positions > 1) {
    auto sampled = sample_candidates(belief, current.pos, cfg.positions - 1, cfg.neighbourhood, rng,
                                     cfg.draws_per_position, cfg.max_halvings);
    positions.insert(positions.end(), sampled.begin(), sampled.end());
  }
  return make_graph(positions, current, gp, cfg.yaw_change_cost);
}

}  // namespace ipp3d
