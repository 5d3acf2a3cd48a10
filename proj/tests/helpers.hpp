#pragma once

#include "ipp3d/belief.hpp"
#include "ipp3d/random.hpp"
#include "ipp3d/world.hpp"

#include <Eigen/Dense>

namespace testing_helpers {

using namespace ipp3d;

inline Eigen::Vector3d random_point(Rng& rng, double lo = 0.0, double hi = 1.0) {
  return {uniform(rng, lo, hi), uniform(rng, lo, hi), uniform(rng, lo, hi)};
}

inline Action random_action(Rng& rng) {
  return {random_point(rng), Yaw{static_cast<int>(uniform_index(rng, kNumYaws))}};
}

inline World random_world(std::uint64_t seed) {
  WorldGenConfig cfg;
  cfg.mode = LayoutMode::random;
  return generate_world(cfg, seed);
}

inline World grid_world(std::uint64_t seed) {
  WorldGenConfig cfg;
  cfg.mode = LayoutMode::grid;
  return generate_world(cfg, seed);
}

// A world without trees or targets.
inline World empty_world(int resolution = 50) {
  World w;
  w.grid = VoxelGrid<Terrain>(resolution, Terrain::free);
  return w;
}

// Belief whose occupancy already equals the ground truth everywhere.
inline BeliefState omniscient_belief(const World& w, double budget) {
  BeliefState b(w, budget);
  for (int z = 0; z < w.grid.resolution(); ++z)
    for (int y = 0; y < w.grid.resolution(); ++y)
      for (int x = 0; x < w.grid.resolution(); ++x) {
        const VoxelIndex v{x, y, z};
        b.occ[v] = w.grid[v] == Terrain::tree ? Occupancy::occupied : Occupancy::free;
      }
  return b;
}

// A free point of the ground truth, drawn uniformly.
inline Eigen::Vector3d free_point(const World& w, Rng& rng) {
  for (;;) {
    const auto p = random_point(rng);
    if (w.grid.at(p) == Terrain::free) return p;
  }
}

}  // namespace testing_helpers
