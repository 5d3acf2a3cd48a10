#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <span>
#include <vector>

namespace ipp3d {

using VoxelIndex = std::array<int, 3>;

// Dense cubic grid of labels over the unit cube.
template <typename Label>
class VoxelGrid {
 public:
  explicit VoxelGrid(int resolution = 50, Label fill = Label{})
      : res_(resolution), cells_(static_cast<std::size_t>(resolution) * resolution * resolution, fill) {}

  int resolution() const { return res_; }
  double voxel_size() const { return 1.0 / res_; }
  std::size_t size() const { return cells_.size(); }

  bool contains(const VoxelIndex& v) const {
    return v[0] >= 0 && v[1] >= 0 && v[2] >= 0 && v[0] < res_ && v[1] < res_ && v[2] < res_;
  }

  // Points on the upper boundary (coordinate 1.0) belong to the last voxel.
  VoxelIndex index_of(const Eigen::Vector3d& p) const {
    VoxelIndex v;
    for (int a = 0; a < 3; ++a) {
      v[a] = std::clamp(static_cast<int>(std::floor(p[a] * res_)), 0, res_ - 1);
    }
    return v;
  }

  Eigen::Vector3d center(const VoxelIndex& v) const {
    return {(v[0] + 0.5) / res_, (v[1] + 0.5) / res_, (v[2] + 0.5) / res_};
  }

  Label operator[](const VoxelIndex& v) const { return cells_[flat(v)]; }
  Label& operator[](const VoxelIndex& v) { return cells_[flat(v)]; }
  Label at(const Eigen::Vector3d& p) const { return (*this)[index_of(p)]; }

  std::size_t count(Label label) const { return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), label)); }

  std::span<const Label> cells() const { return cells_; }

  friend bool operator==(const VoxelGrid&, const VoxelGrid&) = default;

 private:
  std::size_t flat(const VoxelIndex& v) const {
    return (static_cast<std::size_t>(v[2]) * res_ + v[1]) * res_ + v[0];
  }

  int res_;
  std::vector<Label> cells_;
};

// Visits, in order, every voxel crossed by the segment p0 -> p1 (3D DDA
// stepping). When the segment leaves a voxel exactly through an edge or corner
// all tied axes advance together, so voxels touched only at a single point are
// not reported. `visit(VoxelIndex)` returns false to stop early; the function
// returns false iff it was stopped.
template <typename Visitor>
bool traverse_segment(int resolution, const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, Visitor&& visit) {
  const Eigen::Vector3d g0 = p0 * resolution;
  const Eigen::Vector3d g1 = p1 * resolution;
  VoxelIndex cur, last;
  for (int a = 0; a < 3; ++a) {
    cur[a] = std::clamp(static_cast<int>(std::floor(g0[a])), 0, resolution - 1);
    last[a] = std::clamp(static_cast<int>(std::floor(g1[a])), 0, resolution - 1);
  }

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::array<int, 3> step{}, remaining{};
  std::array<double, 3> t_max{inf, inf, inf}, t_delta{inf, inf, inf};
  for (int a = 0; a < 3; ++a) {
    remaining[a] = std::abs(last[a] - cur[a]);
    if (remaining[a] == 0) continue;
    const double diff = g1[a] - g0[a];
    step[a] = last[a] > cur[a] ? 1 : -1;
    const double boundary = step[a] > 0 ? cur[a] + 1.0 : static_cast<double>(cur[a]);
    t_max[a] = (boundary - g0[a]) / diff;
    t_delta[a] = 1.0 / std::abs(diff);
  }

  if (!visit(cur)) return false;
  while (remaining[0] + remaining[1] + remaining[2] > 0) {
    double t = inf;
    for (int a = 0; a < 3; ++a) {
      if (remaining[a] > 0) t = std::min(t, t_max[a]);
    }
    for (int a = 0; a < 3; ++a) {
      if (remaining[a] > 0 && t_max[a] == t) {
        cur[a] += step[a];
        t_max[a] += t_delta[a];
        --remaining[a];
      }
    }
    if (!visit(cur)) return false;
  }
  return true;
}

// True iff no voxel on the segment satisfies `blocks(label)`.
template <typename Label, typename BlockPred>
bool ray_clear(const VoxelGrid<Label>& grid, const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, BlockPred&& blocks) {
  return traverse_segment(grid.resolution(), p0, p1, [&](const VoxelIndex& v) { return !blocks(grid[v]); });
}

// Like ray_clear but the voxel containing p1 never blocks: a surface is
// visible even though its own voxel is solid.
template <typename Label, typename BlockPred>
bool line_of_sight(const VoxelGrid<Label>& grid, const Eigen::Vector3d& p0, const Eigen::Vector3d& p1,
                   BlockPred&& blocks) {
  const VoxelIndex target = grid.index_of(p1);
  return traverse_segment(grid.resolution(), p0, p1,
                          [&](const VoxelIndex& v) { return v == target || !blocks(grid[v]); });
}

}  // namespace ipp3d
