#pragma once

#include "ipp3d/errors.hpp"
#include "ipp3d/random.hpp"
#include "ipp3d/voxel_grid.hpp"

#include <nlohmann/json.hpp>

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace ipp3d {

enum class Terrain : std::uint8_t { free = 0, tree = 1 };

enum class LayoutMode { grid, random };

inline std::string_view to_string(LayoutMode m) { return m == LayoutMode::grid ? "grid" : "random"; }

inline LayoutMode layout_from_string(std::string_view s) {
  if (s == "grid") return LayoutMode::grid;
  if (s == "random") return LayoutMode::random;
  throw ConfigError("unknown layout mode '" + std::string(s) + "' (expected grid or random)");
}

// Vertical cylinder trunk topped by an axis-aligned ellipsoid canopy.
struct TreeGeom {
  Eigen::Vector2d base = Eigen::Vector2d::Zero();
  double trunk_radius = 0.015;
  double trunk_height = 0.45;
  Eigen::Vector3d canopy_center = Eigen::Vector3d::Zero();
  Eigen::Vector3d canopy_axes = Eigen::Vector3d::Zero();

  bool in_trunk(const Eigen::Vector3d& p) const {
    return p.z() >= 0.0 && p.z() <= trunk_height && (p.head<2>() - base).squaredNorm() <= trunk_radius * trunk_radius;
  }
  bool in_canopy(const Eigen::Vector3d& p, double tol = 0.0) const {
    return ((p - canopy_center).array() / canopy_axes.array()).matrix().squaredNorm() <= 1.0 + tol;
  }
  bool contains(const Eigen::Vector3d& p) const { return in_trunk(p) || in_canopy(p); }
};

struct WorldGenConfig {
  LayoutMode mode = LayoutMode::grid;
  int grid_side = 5;             // grid mode: grid_side x grid_side trees
  int random_tree_count = 20;    // random mode
  double trunk_radius = 0.015;
  double trunk_height = 0.45;
  Eigen::Vector3d canopy_axes{0.05, 0.05, 0.10};
  double tree_clearance = 0.01;  // minimum gap between canopies in random mode
  int min_targets = 200;
  int max_targets = 250;
  // Fruits are uniform over the outer canopy shell between this radial
  // fraction and the canopy surface (1.0 = surface only, 0.0 = full volume).
  double fruit_shell = 1.0;
  int placement_attempts = 2000;  // per tree
  int layout_restarts = 50;
  int resolution = 50;
};

struct World {
  std::uint64_t seed = 0;
  LayoutMode mode = LayoutMode::grid;
  std::vector<TreeGeom> trees;
  std::vector<Eigen::Vector3d> targets;
  int n_targets = 0;
  VoxelGrid<Terrain> grid;

  bool solid(const Eigen::Vector3d& p) const {
    for (const auto& t : trees) {
      if (t.contains(p)) return true;
    }
    return false;
  }
};

// Labels every voxel whose center lies inside some tree solid.
inline VoxelGrid<Terrain> rasterize(const std::vector<TreeGeom>& trees, int resolution) {
  VoxelGrid<Terrain> grid(resolution, Terrain::free);
  for (const auto& t : trees) {
    const Eigen::Vector3d lo(std::min(t.base.x() - t.trunk_radius, t.canopy_center.x() - t.canopy_axes.x()),
                             std::min(t.base.y() - t.trunk_radius, t.canopy_center.y() - t.canopy_axes.y()), 0.0);
    const Eigen::Vector3d hi(std::max(t.base.x() + t.trunk_radius, t.canopy_center.x() + t.canopy_axes.x()),
                             std::max(t.base.y() + t.trunk_radius, t.canopy_center.y() + t.canopy_axes.y()),
                             std::max(t.trunk_height, t.canopy_center.z() + t.canopy_axes.z()));
    const VoxelIndex a = grid.index_of(lo), b = grid.index_of(hi);
    for (int z = a[2]; z <= b[2]; ++z)
      for (int y = a[1]; y <= b[1]; ++y)
        for (int x = a[0]; x <= b[0]; ++x) {
          const VoxelIndex v{x, y, z};
          if (t.contains(grid.center(v))) grid[v] = Terrain::tree;
        }
  }
  return grid;
}

namespace detail {

inline TreeGeom make_tree(const WorldGenConfig& cfg, Eigen::Vector2d base) {
  TreeGeom t;
  t.base = base;
  t.trunk_radius = cfg.trunk_radius;
  t.trunk_height = cfg.trunk_height;
  t.canopy_center = Eigen::Vector3d(base.x(), base.y(), cfg.trunk_height);
  t.canopy_axes = cfg.canopy_axes;
  return t;
}

inline void check_fits(const WorldGenConfig& cfg) {
  const auto& ax = cfg.canopy_axes;
  if (cfg.trunk_radius <= 0.0 || (ax.array() <= 0.0).any()) throw PlacementError("tree dimensions must be positive");
  if (cfg.trunk_height + ax.z() > 1.0 || cfg.trunk_height - ax.z() < 0.0)
    throw PlacementError("canopy does not fit vertically inside the unit cube");
  if (2.0 * ax.x() > 1.0 || 2.0 * ax.y() > 1.0) throw PlacementError("canopy wider than the unit cube");
}

inline std::vector<TreeGeom> place_grid(const WorldGenConfig& cfg) {
  const int n = cfg.grid_side;
  if (n <= 0) throw PlacementError("grid_side must be positive");
  const double cell = 1.0 / n;
  if (2.0 * cfg.canopy_axes.x() > cell || 2.0 * cfg.canopy_axes.y() > cell)
    throw PlacementError("canopies overlap at this grid spacing");
  std::vector<TreeGeom> trees;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) trees.push_back(make_tree(cfg, {(i + 0.5) * cell, (j + 0.5) * cell}));
  return trees;
}

inline std::vector<TreeGeom> place_random(const WorldGenConfig& cfg, Rng& rng) {
  const double rx = cfg.canopy_axes.x(), ry = cfg.canopy_axes.y();
  const double min_dist = 2.0 * std::max(rx, ry) + cfg.tree_clearance;
  for (int restart = 0; restart < cfg.layout_restarts; ++restart) {
    std::vector<TreeGeom> trees;
    bool ok = true;
    for (int k = 0; k < cfg.random_tree_count && ok; ++k) {
      ok = false;
      for (int attempt = 0; attempt < cfg.placement_attempts; ++attempt) {
        const Eigen::Vector2d c(uniform(rng, rx, 1.0 - rx), uniform(rng, ry, 1.0 - ry));
        bool clear = true;
        for (const auto& t : trees) {
          if ((t.base - c).norm() < min_dist) {
            clear = false;
            break;
          }
        }
        if (clear) {
          trees.push_back(make_tree(cfg, c));
          ok = true;
          break;
        }
      }
    }
    if (ok) return trees;
  }
  throw PlacementError("could not place " + std::to_string(cfg.random_tree_count) + " non-overlapping trees");
}

inline Eigen::Vector3d sample_fruit(const TreeGeom& t, double shell, Rng& rng) {
  std::normal_distribution<double> normal;
  Eigen::Vector3d dir;
  do {
    dir = Eigen::Vector3d(normal(rng), normal(rng), normal(rng));
  } while (dir.squaredNorm() < 1e-12);
  dir.normalize();
  const double s3 = shell * shell * shell;
  const double r = std::cbrt(uniform(rng, s3, 1.0));
  return t.canopy_center + (t.canopy_axes.array() * (r * dir).array()).matrix();
}

}  // namespace detail

// Deterministic in (cfg, seed). Grid layouts ignore the seed for tree
// placement; fruit placement always depends on it.
inline World generate_world(const WorldGenConfig& cfg, std::uint64_t seed) {
  detail::check_fits(cfg);
  if (cfg.min_targets < 0 || cfg.max_targets < cfg.min_targets) throw ConfigError("invalid target count range");
  Rng rng(seed);
  World w;
  w.seed = seed;
  w.mode = cfg.mode;
  w.trees = cfg.mode == LayoutMode::grid ? detail::place_grid(cfg) : detail::place_random(cfg, rng);
  if (w.trees.empty() && cfg.max_targets > 0) throw PlacementError("no trees to attach fruits to");

  w.n_targets = std::uniform_int_distribution<int>(cfg.min_targets, cfg.max_targets)(rng);
  w.targets.reserve(w.n_targets);
  for (int i = 0; i < w.n_targets; ++i) {
    const auto& tree = w.trees[uniform_index(rng, w.trees.size())];
    w.targets.push_back(detail::sample_fruit(tree, cfg.fruit_shell, rng));
  }
  w.grid = rasterize(w.trees, cfg.resolution);
  return w;
}

// ---------------------------------------------------------------------------
// JSON persistence. Grids are rebuilt on load.

inline nlohmann::json to_json(const World& w) {
  using nlohmann::json;
  json trees = json::array();
  for (const auto& t : w.trees) {
    trees.push_back({{"base", {t.base.x(), t.base.y()}},
                     {"trunk_radius", t.trunk_radius},
                     {"trunk_height", t.trunk_height},
                     {"canopy_center", {t.canopy_center.x(), t.canopy_center.y(), t.canopy_center.z()}},
                     {"canopy_axes", {t.canopy_axes.x(), t.canopy_axes.y(), t.canopy_axes.z()}}});
  }
  json targets = json::array();
  for (const auto& p : w.targets) targets.push_back({p.x(), p.y(), p.z()});
  return {{"seed", w.seed}, {"mode", to_string(w.mode)}, {"trees", trees}, {"targets", targets}, {"n_targets", w.n_targets}};
}

inline World world_from_json(const nlohmann::json& j, int resolution = 50) {
  try {
    World w;
    w.seed = j.at("seed").get<std::uint64_t>();
    w.mode = layout_from_string(j.at("mode").get<std::string>());
    auto vec3 = [](const nlohmann::json& a) { return Eigen::Vector3d(a.at(0), a.at(1), a.at(2)); };
    for (const auto& jt : j.at("trees")) {
      TreeGeom t;
      t.base = Eigen::Vector2d(jt.at("base").at(0), jt.at("base").at(1));
      t.trunk_radius = jt.at("trunk_radius");
      t.trunk_height = jt.at("trunk_height");
      t.canopy_center = vec3(jt.at("canopy_center"));
      t.canopy_axes = vec3(jt.at("canopy_axes"));
      w.trees.push_back(t);
    }
    for (const auto& jp : j.at("targets")) w.targets.push_back(vec3(jp));
    w.n_targets = j.at("n_targets");
    if (w.n_targets != static_cast<int>(w.targets.size())) throw FormatError("n_targets does not match targets[]");
    w.grid = rasterize(w.trees, resolution);
    return w;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed world document: ") + e.what());
  }
}

inline void save_world(const World& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << to_json(w).dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path);
}

inline World load_world(const std::string& path, int resolution = 50) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
  return world_from_json(j, resolution);
}

}  // namespace ipp3d
