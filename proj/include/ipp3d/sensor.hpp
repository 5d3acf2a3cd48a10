#pragma once

#include "ipp3d/action.hpp"
#include "ipp3d/world.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace ipp3d {

// Forward-looking depth camera with zero pitch and roll.
struct SensorConfig {
  double range = 0.24;
  double fov_horizontal = std::numbers::pi / 2.0;
  double fov_vertical = std::numbers::pi / 2.0;
};

inline bool in_frustum(const Action& pose, const Eigen::Vector3d& q, const SensorConfig& s) {
  const Eigen::Vector3d v = q - pose.pos;
  if (v.squaredNorm() > s.range * s.range) return false;
  const double c = std::cos(pose.yaw.radians()), sn = std::sin(pose.yaw.radians());
  const double forward = v.x() * c + v.y() * sn;
  if (forward <= 0.0) return false;
  const double lateral = -v.x() * sn + v.y() * c;
  return std::abs(lateral) <= forward * std::tan(s.fov_horizontal / 2.0) &&
         std::abs(v.z()) <= forward * std::tan(s.fov_vertical / 2.0);
}

inline bool blocks_sight(Terrain t) { return t == Terrain::tree; }

inline bool target_visible(const World& world, const Action& pose, const Eigen::Vector3d& target,
                           const SensorConfig& s) {
  return in_frustum(pose, target, s) && line_of_sight(world.grid, pose.pos, target, blocks_sight);
}

// Ids of targets inside the frustum, within range and not occluded by tree
// voxels, ascending.
inline std::vector<int> visible_targets(const World& world, const Action& pose, const SensorConfig& s) {
  std::vector<int> ids;
  for (int i = 0; i < world.n_targets; ++i) {
    if (target_visible(world, pose, world.targets[i], s)) ids.push_back(i);
  }
  return ids;
}

// Fraction of all targets visible from `pose`.
inline double utility(const World& world, const Action& pose, const SensorConfig& s) {
  if (world.n_targets == 0) return 0.0;
  return static_cast<double>(visible_targets(world, pose, s).size()) / world.n_targets;
}

}  // namespace ipp3d
