#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <numbers>

namespace ipp3d {

inline constexpr int kNumYaws = 4;

// Discrete sensor yaw. Index i maps to i * pi/2 rad; yaw 0 looks along +x and
// angles grow counter-clockwise about +z.
struct Yaw {
  int index = 0;

  constexpr double radians() const { return index * (std::numbers::pi / 2.0); }
  constexpr double normalized() const { return static_cast<double>(index) / kNumYaws; }
  friend constexpr bool operator==(Yaw, Yaw) = default;
};

inline constexpr std::array<Yaw, kNumYaws> kAllYaws{Yaw{0}, Yaw{1}, Yaw{2}, Yaw{3}};

// A 4D pose [x, y, z, d] inside the unit cube.
struct Action {
  Eigen::Vector3d pos = Eigen::Vector3d::Zero();
  Yaw yaw{};

  Eigen::Vector3d heading() const { return {std::cos(yaw.radians()), std::sin(yaw.radians()), 0.0}; }
  friend bool operator==(const Action& a, const Action& b) { return a.pos == b.pos && a.yaw == b.yaw; }
};

inline bool in_bounds(const Eigen::Vector3d& p) {
  return (p.array() >= 0.0).all() && (p.array() <= 1.0).all();
}

// Straight-line motion cost plus a constant for any yaw change.
inline double edge_cost(const Action& from, const Action& to, double yaw_change_cost) {
  return (from.pos - to.pos).norm() + (from.yaw == to.yaw ? 0.0 : yaw_change_cost);
}

}  // namespace ipp3d
