#pragma once

#include "ipp3d/action.hpp"
#include "ipp3d/errors.hpp"
#include "ipp3d/sensor.hpp"
#include "ipp3d/voxel_grid.hpp"
#include "ipp3d/world.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ipp3d {

enum class Occupancy : std::uint8_t { unknown = 0, free = 1, occupied = 2 };

struct MissionConfig {
  SensorConfig sensor;
  double observation_interval = 0.2;
  double yaw_change_cost = 0.1;
  int max_steps = 256;
  Action start{Eigen::Vector3d::Zero(), Yaw{1}};
};

// A fused observation: the pose it was taken from and the utility measured.
struct Sample {
  Action pose;
  double utility = 0.0;
};

struct BeliefState {
  VoxelGrid<Occupancy> occ;
  std::vector<std::uint8_t> discovered_mask;
  std::vector<int> discovered;  // in discovery order
  std::vector<Sample> gp_samples;
  std::vector<Action> path;
  Action current;
  double budget_initial = 0.0;
  double budget_remaining = 0.0;
  double cost_spent = 0.0;
  int step_count = 0;

  BeliefState() = default;
  BeliefState(const World& world, double budget)
      : occ(world.grid.resolution(), Occupancy::unknown),
        discovered_mask(static_cast<std::size_t>(world.n_targets), 0),
        budget_initial(budget),
        budget_remaining(budget) {}

  int n_discovered() const { return static_cast<int>(discovered.size()); }
};

inline bool known_free_only_blocks(Occupancy o) { return o != Occupancy::free; }

// Straight-line reachability through known-free voxels only.
inline bool reachable(const BeliefState& belief, const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
  return ray_clear(belief.occ, from, to, known_free_only_blocks);
}

struct ObservationResult {
  double utility = 0.0;
  std::vector<int> newly_discovered;
};

// Marks the voxel holding the pose plus every voxel whose center is in the
// frustum with a clear line of sight, copying the ground-truth label; then
// records visible targets and the (pose, utility) sample.
inline ObservationResult take_observation(BeliefState& belief, const World& world, const Action& pose,
                                          const SensorConfig& sensor) {
  auto& occ = belief.occ;
  auto reveal = [&](const VoxelIndex& v) {
    occ[v] = world.grid[v] == Terrain::tree ? Occupancy::occupied : Occupancy::free;
  };
  reveal(occ.index_of(pose.pos));

  const double r = sensor.range;
  const VoxelIndex lo = occ.index_of(pose.pos - Eigen::Vector3d::Constant(r));
  const VoxelIndex hi = occ.index_of(pose.pos + Eigen::Vector3d::Constant(r));
  for (int z = lo[2]; z <= hi[2]; ++z)
    for (int y = lo[1]; y <= hi[1]; ++y)
      for (int x = lo[0]; x <= hi[0]; ++x) {
        const VoxelIndex v{x, y, z};
        if (occ[v] != Occupancy::unknown) continue;  // labels only ever copy ground truth
        const Eigen::Vector3d c = occ.center(v);
        if (in_frustum(pose, c, sensor) && line_of_sight(world.grid, pose.pos, c, blocks_sight)) reveal(v);
      }

  ObservationResult out;
  const auto seen = visible_targets(world, pose, sensor);
  for (int id : seen) {
    if (!belief.discovered_mask[id]) {
      belief.discovered_mask[id] = 1;
      belief.discovered.push_back(id);
      out.newly_discovered.push_back(id);
    }
  }
  out.utility = world.n_targets > 0 ? static_cast<double>(seen.size()) / world.n_targets : 0.0;
  belief.gp_samples.push_back({pose, out.utility});
  return out;
}

struct TransitionOutcome {
  std::vector<Sample> observations;
  int new_target_count = 0;
  double cost = 0.0;
  bool terminal = false;
};

inline bool mission_over(const BeliefState& belief, const MissionConfig& m) {
  return belief.budget_remaining < m.yaw_change_cost || belief.step_count >= m.max_steps;
}

// Zero-cost bootstrap: one observation per yaw at the start position, ending
// at the configured start pose.
inline std::vector<Sample> start_mission(BeliefState& belief, const World& world, const MissionConfig& m) {
  std::vector<Sample> obs;
  for (Yaw y : kAllYaws) {
    const Action pose{m.start.pos, y};
    const auto r = take_observation(belief, world, pose, m.sensor);
    obs.push_back({pose, r.utility});
  }
  belief.current = m.start;
  belief.path.assign(1, m.start);
  return obs;
}

// Flies the straight segment from -> to with the destination yaw, observing
// every `observation_interval` of travel and at the endpoint.
inline TransitionOutcome step_transition(BeliefState& belief, const World& world, const Action& from, const Action& to,
                                         const MissionConfig& m) {
  TransitionOutcome out;
  out.cost = edge_cost(from, to, m.yaw_change_cost);
  if (out.cost > belief.budget_remaining) {
    throw BudgetExceeded("transition cost " + std::to_string(out.cost) + " exceeds remaining budget " +
                         std::to_string(belief.budget_remaining));
  }
  if (!reachable(belief, from.pos, to.pos)) throw PathBlocked("segment crosses voxels that are not known-free");

  const Eigen::Vector3d delta = to.pos - from.pos;
  const double length = delta.norm();
  std::vector<Action> stops;
  for (int k = 1; k * m.observation_interval < length - 1e-12; ++k) {
    stops.push_back({from.pos + delta * (k * m.observation_interval / length), to.yaw});
  }
  stops.push_back(to);

  for (const auto& pose : stops) {
    const auto r = take_observation(belief, world, pose, m.sensor);
    out.observations.push_back({pose, r.utility});
    out.new_target_count += static_cast<int>(r.newly_discovered.size());
  }

  belief.budget_remaining -= out.cost;
  belief.cost_spent += out.cost;
  belief.step_count += 1;
  belief.current = to;
  belief.path.push_back(to);
  out.terminal = mission_over(belief, m);
  return out;
}

}  // namespace ipp3d
