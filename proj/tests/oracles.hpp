#pragma once

// Slow, independent reference implementations used to check the production
// code. Nothing here calls the routine it is checking.

#include "ipp3d/action.hpp"
#include "ipp3d/gp.hpp"
#include "ipp3d/nn/policy.hpp"
#include "ipp3d/world.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

using ipp3d::Action;
using Idx = std::array<int, 3>;

inline Idx voxel_of(const Eigen::Vector3d& p, int res) {
  Idx v;
  for (int a = 0; a < 3; ++a) v[a] = std::clamp(static_cast<int>(std::floor(p[a] * res)), 0, res - 1);
  return v;
}

inline int manhattan(const Idx& a, const Idx& b) {
  return std::abs(a[0] - b[0]) + std::abs(a[1] - b[1]) + std::abs(a[2] - b[2]);
}

// Voxels crossed by p0 -> p1, in order, found by sampling the segment every
// `step` of length and bisecting between samples whose voxels are not
// face-adjacent. A pair still apart below 1e-13 of the parameter is a
// corner or edge crossing; the far voxel is appended directly.
inline std::vector<Idx> dense_voxels(const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, int res,
                                     double step = 1e-4) {
  const double len = (p1 - p0).norm();
  const auto at = [&](double t) { return voxel_of(p0 + t * (p1 - p0), res); };
  std::vector<Idx> out{at(0.0)};
  std::function<void(double, double, const Idx&, const Idx&)> refine = [&](double ta, double tb, const Idx& va,
                                                                          const Idx& vb) {
    if (va == vb) return;
    if (manhattan(va, vb) <= 1 || tb - ta < 1e-13) {
      out.push_back(vb);
      return;
    }
    const double tm = 0.5 * (ta + tb);
    const Idx vm = at(tm);
    refine(ta, tm, va, vm);
    refine(tm, tb, vm, vb);
  };
  const int n = std::max(1, static_cast<int>(std::ceil(len / step)));
  Idx prev = out.front();
  for (int k = 1; k <= n; ++k) {
    const double ta = static_cast<double>(k - 1) / n, tb = static_cast<double>(k) / n;
    const Idx cur = at(tb);
    refine(ta, tb, prev, cur);
    prev = cur;
  }
  return out;
}

template <typename Grid, typename Blocks>
bool dense_ray_clear(const Grid& grid, const Eigen::Vector3d& p0, const Eigen::Vector3d& p1, Blocks&& blocks) {
  for (const auto& v : dense_voxels(p0, p1, grid.resolution()))
    if (blocks(grid[v])) return false;
  return true;
}

// Frustum test written with angles rather than tangents.
inline bool frustum(const Action& pose, const Eigen::Vector3d& q, double range, double fov_h, double fov_v) {
  const Eigen::Vector3d v = q - pose.pos;
  if (v.norm() > range) return false;
  const double yaw = pose.yaw.index * std::numbers::pi / 2.0;
  const Eigen::Matrix3d rot = Eigen::AngleAxisd(-yaw, Eigen::Vector3d::UnitZ()).toRotationMatrix();
  const Eigen::Vector3d c = rot * v;  // camera frame: +x forward, +y left, +z up
  if (c.x() <= 0.0) return false;
  return std::abs(std::atan2(c.y(), c.x())) <= fov_h / 2.0 + 1e-12 &&
         std::atan2(std::abs(c.z()), c.x()) <= fov_v / 2.0 + 1e-12;
}

// Line of sight over the ground truth, ignoring the target's own voxel.
inline bool sight(const ipp3d::World& w, const Eigen::Vector3d& from, const Eigen::Vector3d& to) {
  const Idx target = voxel_of(to, w.grid.resolution());
  for (const auto& v : dense_voxels(from, to, w.grid.resolution()))
    if (v != target && w.grid[v] == ipp3d::Terrain::tree) return false;
  return true;
}

inline std::vector<int> visible(const ipp3d::World& w, const Action& pose, double range = 0.24,
                                double fov_h = std::numbers::pi / 2, double fov_v = std::numbers::pi / 2) {
  std::vector<int> ids;
  for (int i = 0; i < w.n_targets; ++i)
    if (frustum(pose, w.targets[i], range, fov_h, fov_v) && sight(w, pose.pos, w.targets[i])) ids.push_back(i);
  return ids;
}

// Point-in-solid test straight from the tree parameters.
inline bool in_canopy(const ipp3d::TreeGeom& t, const Eigen::Vector3d& p, double tol = 0.0) {
  double s = 0.0;
  for (int a = 0; a < 3; ++a) s += std::pow((p[a] - t.canopy_center[a]) / t.canopy_axes[a], 2);
  return s <= 1.0 + tol;
}

inline bool in_tree(const ipp3d::TreeGeom& t, const Eigen::Vector3d& p) {
  const double r2 = std::pow(p.x() - t.base.x(), 2) + std::pow(p.y() - t.base.y(), 2);
  return in_canopy(t, p) || (p.z() >= 0.0 && p.z() <= t.trunk_height && r2 <= t.trunk_radius * t.trunk_radius);
}

// Kernel evaluated from its closed form.
inline double kernel(const Action& a, const Action& b, const ipp3d::GPHyper& h) {
  const int dy = std::abs(a.yaw.index - b.yaw.index) % 4;
  const double ang = std::min(dy, 4 - dy) * std::numbers::pi / 2.0;
  const double sep = h.yaw_metric == ipp3d::YawMetric::chordal ? std::sin(ang / 2.0) : ang / std::numbers::pi;
  const double d2 = (a.pos - b.pos).squaredNorm() + std::pow(h.yaw_weight * sep, 2);
  return h.signal_variance * std::exp(-std::sqrt(d2) / h.length_scale);
}

inline Eigen::MatrixXd gram(const std::vector<Action>& xs, const std::vector<Action>& ys, const ipp3d::GPHyper& h) {
  Eigen::MatrixXd k(xs.size(), ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j) k(i, j) = oracle::kernel(xs[i], ys[j], h);
  return k;
}

struct Posterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// mean = K*^T (K + s I)^-1 y, cov = K** - K*^T (K + s I)^-1 K* via an explicit inverse.
inline Posterior posterior(const std::vector<Action>& xs, const Eigen::VectorXd& y, const std::vector<Action>& q,
                           const ipp3d::GPHyper& h) {
  const Eigen::MatrixXd kqq = gram(q, q, h);
  if (xs.empty()) return {Eigen::VectorXd::Zero(static_cast<Eigen::Index>(q.size())), kqq};
  Eigen::MatrixXd k = gram(xs, xs, h);
  k.diagonal().array() += h.noise_variance;
  const Eigen::MatrixXd inv = k.inverse();
  const Eigen::MatrixXd ks = gram(xs, q, h);
  return {ks.transpose() * inv * y, kqq - ks.transpose() * inv * ks};
}

// A_t = sum_k (gamma lambda)^k delta_{t+k}, truncated at the episode end.
inline std::vector<double> gae(const std::vector<double>& r, const std::vector<double>& v,
                               const std::vector<std::uint8_t>& done, double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> a(n, 0.0);
  for (std::size_t t = 0; t < n; ++t) {
    double w = 1.0;
    for (std::size_t k = t; k < n; ++k) {
      const double next = done[k] || k + 1 == n ? 0.0 : v[k + 1];
      a[t] += w * (r[k] + gamma * next - v[k]);
      if (done[k]) break;
      w *= gamma * lambda;
    }
  }
  return a;
}

// Straight-line evaluation of the actor-critic on plain Eigen matrices.
struct Forward {
  Eigen::VectorXd probs;
  double value = 0.0;
};

inline Forward policy_forward(const ipp3d::nn::PolicyParams<double>& p, const ipp3d::nn::PolicyInput& in) {
  using M = Eigen::MatrixXd;
  const auto arch = p.arch();
  const auto get = [&](const std::string& name) {
    const auto& t = p[name].value();
    M m(t.rows(), t.cols());
    for (int i = 0; i < t.rows(); ++i)
      for (int j = 0; j < t.cols(); ++j) m(i, j) = t.data[static_cast<std::size_t>(i * t.cols() + j)];
    return m;
  };
  const auto lin = [&](const std::string& name, const M& x) {
    M y = x * get(name + ".weight");
    const M b = get(name + ".bias");
    for (int i = 0; i < y.rows(); ++i) y.row(i) += b.row(0);
    return y;
  };
  const auto ln = [&](const std::string& name, const M& x) {
    const M g = get(name + ".scale"), b = get(name + ".offset");
    M y(x.rows(), x.cols());
    for (int i = 0; i < x.rows(); ++i) {
      double mu = 0.0, var = 0.0;
      for (int j = 0; j < x.cols(); ++j) mu += x(i, j);
      mu /= x.cols();
      for (int j = 0; j < x.cols(); ++j) var += (x(i, j) - mu) * (x(i, j) - mu);
      var /= x.cols();
      for (int j = 0; j < x.cols(); ++j) y(i, j) = (x(i, j) - mu) / std::sqrt(var + 1e-5) * g(0, j) + b(0, j);
    }
    return y;
  };
  const auto mha = [&](const std::string& name, const M& qin, const M& ctx) {
    const M q = lin(name + ".query", qin), k = lin(name + ".key", ctx), v = lin(name + ".value", ctx);
    const int d = arch.hidden / arch.heads;
    M out = M::Zero(q.rows(), q.cols());
    for (int h = 0; h < arch.heads; ++h)
      for (int i = 0; i < q.rows(); ++i) {
        std::vector<double> s(static_cast<std::size_t>(k.rows()));
        double mx = -1e300;
        for (int j = 0; j < k.rows(); ++j) {
          double dot = 0.0;
          for (int c = 0; c < d; ++c) dot += q(i, h * d + c) * k(j, h * d + c);
          s[j] = dot / std::sqrt(static_cast<double>(d));
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (auto& x : s) z += (x = std::exp(x - mx));
        for (int j = 0; j < k.rows(); ++j)
          for (int c = 0; c < d; ++c) out(i, h * d + c) += s[j] / z * v(j, h * d + c);
      }
    return lin(name + ".out", out);
  };
  const auto ffn = [&](const std::string& name, const M& x) {
    return lin(name + ".fc2", lin(name + ".fc1", x).cwiseMax(0.0));
  };

  M nodes = lin("node_embed", in.features);
  for (int l = 0; l < arch.encoder_layers; ++l) {
    const std::string b = "encoder." + std::to_string(l);
    const M y = ln(b + ".norm1", nodes);
    nodes = nodes + mha(b + ".attn", y, y);
    nodes = nodes + ffn(b + ".ffn", ln(b + ".norm2", nodes));
  }
  nodes = ln("encoder.norm", nodes);
  M scalars(1, 2);
  scalars << in.budget_remaining / arch.budget_scale, in.threshold;
  M state = lin("state.pose", M(in.current)) + lin("state.scalars", scalars);
  state = state + mha("decoder.attn", ln("decoder.norm1", state), nodes);
  state = state + ffn("decoder.ffn", ln("decoder.norm2", state));
  state = ln("decoder.norm", state);
  const M q = lin("pointer.query", state), k = lin("pointer.key", nodes);
  const int n = in.size();
  Forward out;
  out.probs = Eigen::VectorXd::Zero(n);
  std::vector<double> logits(static_cast<std::size_t>(n));
  double mx = -1e300;
  for (int j = 0; j < n; ++j) {
    logits[j] = arch.logit_clip * std::tanh(q.row(0).dot(k.row(j)) / std::sqrt(static_cast<double>(arch.hidden)));
    if (in.costs(j) <= in.budget_remaining) mx = std::max(mx, logits[j]);
  }
  double z = 0.0;
  for (int j = 0; j < n; ++j)
    if (in.costs(j) <= in.budget_remaining) z += (out.probs(j) = std::exp(logits[j] - mx));
  out.probs /= z;
  out.value = lin("value_head", state)(0, 0);
  return out;
}

}  // namespace oracle
