#pragma once

#include "ipp3d/action.hpp"
#include "ipp3d/errors.hpp"

#include <Eigen/Core>
#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

namespace ipp3d {

// How the wrapped yaw difference enters the kernel distance. `geodesic` uses
// angle / pi, which can make the exponential kernel indefinite once it is
// combined with position in quadrature; `chordal` uses sin(angle / 2), an
// embedding of the yaw circle in the plane, so the kernel stays positive
// definite for every length scale and weight.
enum class YawMetric { chordal, geodesic };

struct GPHyper {
  double length_scale = 0.25;
  double signal_variance = 1.0;
  double noise_variance = 1e-4;
  double yaw_weight = 0.5;
  YawMetric yaw_metric = YawMetric::chordal;
};

// Wrapped yaw difference in [0, pi].
inline double yaw_distance(Yaw a, Yaw b) {
  const double d = std::abs(a.radians() - b.radians());
  return std::min(d, 2.0 * std::numbers::pi - d);
}

// Normalized yaw separation in [0, 1].
inline double yaw_separation(Yaw a, Yaw b, YawMetric metric) {
  const double ang = yaw_distance(a, b);
  return metric == YawMetric::chordal ? std::sin(ang / 2.0) : ang / std::numbers::pi;
}

inline double action_distance(const Action& a, const Action& b, const GPHyper& h) {
  const double dy = h.yaw_weight * yaw_separation(a.yaw, b.yaw, h.yaw_metric);
  return std::sqrt((a.pos - b.pos).squaredNorm() + dy * dy);
}

// Matern 1/2 (exponential) covariance over the 4D action space.
inline double kernel(const Action& a, const Action& b, const GPHyper& h) {
  return h.signal_variance * std::exp(-action_distance(a, b, h) / h.length_scale);
}

inline Eigen::MatrixXd kernel_matrix(std::span<const Action> xs, std::span<const Action> ys, const GPHyper& h) {
  Eigen::MatrixXd k(xs.size(), ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j) k(i, j) = kernel(xs[i], ys[j], h);
  return k;
}

struct Posterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

struct PosteriorDiag {
  Eigen::VectorXd mean;
  Eigen::VectorXd var;
};

// Zero-mean GP regression of action utility. The Cholesky factor of
// K + (noise + jitter) I is kept current across appends and evictions.
class GPModel {
 public:
  static constexpr double kJitterStart = 1e-8;
  static constexpr double kJitterMax = 1e-4;

  explicit GPModel(GPHyper hyper = {}, std::size_t capacity = 1024) : hyper_(hyper), capacity_(capacity) {}

  const GPHyper& hyper() const { return hyper_; }
  std::size_t size() const { return xs_.size(); }
  std::size_t capacity() const { return capacity_; }
  double jitter() const { return jitter_; }
  std::span<const Action> inputs() const { return xs_; }
  const Eigen::VectorXd& targets() const { return ys_; }
  // Lower-triangular factor, size() x size().
  auto factor() const { return chol_.topLeftCorner(size(), size()); }

  void add_sample(const Action& a, double u) {
    if (xs_.size() == capacity_) evict_oldest();
    const auto n = static_cast<Eigen::Index>(xs_.size());
    xs_.push_back(a);
    ys_.conservativeResize(n + 1);
    ys_(n) = u;
    grow_storage(n + 1);

    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k(i) = kernel(xs_[i], a, hyper_);
    const double diag = hyper_.signal_variance + hyper_.noise_variance + jitter_;
    if (n > 0) chol_.topLeftCorner(n, n).triangularView<Eigen::Lower>().solveInPlace(k);
    const double pivot = diag - (n > 0 ? k.squaredNorm() : 0.0);
    if (pivot > pivot_floor(diag)) {
      chol_.row(n).head(n) = k.transpose();
      chol_(n, n) = std::sqrt(pivot);
      chol_.col(n).head(n).setZero();
    } else {
      refactor();
    }
    update_weights();
  }

  // Rebuilds the factor from scratch, escalating jitter only if needed.
  void refactor() {
    const auto n = static_cast<Eigen::Index>(xs_.size());
    const Eigen::MatrixXd k = kernel_matrix(xs_, xs_, hyper_);
    for (double jitter = 0.0;; jitter = jitter == 0.0 ? kJitterStart : jitter * 10.0) {
      if (jitter > kJitterMax * (1.0 + 1e-9)) throw SingularKernel("kernel matrix not positive definite after jitter");
      Eigen::MatrixXd a = k;
      a.diagonal().array() += hyper_.noise_variance + jitter;
      Eigen::LLT<Eigen::MatrixXd> llt(a);
      if (llt.info() == Eigen::Success && (llt.matrixLLT().diagonal().array() > 0.0).all()) {
        grow_storage(n);
        chol_.topLeftCorner(n, n) = llt.matrixL();
        jitter_ = jitter;
        break;
      }
    }
    update_weights();
  }

  PosteriorDiag posterior_diag(std::span<const Action> query) const {
    PosteriorDiag out;
    const auto m = static_cast<Eigen::Index>(query.size());
    out.var.resize(m);
    if (xs_.empty()) {
      out.mean = Eigen::VectorXd::Zero(m);
      out.var.setConstant(hyper_.signal_variance);
      return out;
    }
    const Eigen::MatrixXd ks = kernel_matrix(xs_, query, hyper_);
    out.mean = ks.transpose() * weights_;
    const Eigen::MatrixXd v = factor().triangularView<Eigen::Lower>().solve(ks);
    for (Eigen::Index j = 0; j < m; ++j) {
      out.var(j) = std::max(0.0, hyper_.signal_variance - v.col(j).squaredNorm());
    }
    return out;
  }

  Posterior posterior(std::span<const Action> query) const {
    Posterior out;
    Eigen::MatrixXd kqq = kernel_matrix(query, query, hyper_);
    if (xs_.empty()) {
      out.mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(query.size()));
      out.cov = std::move(kqq);
      return out;
    }
    const Eigen::MatrixXd ks = kernel_matrix(xs_, query, hyper_);
    out.mean = ks.transpose() * weights_;
    const Eigen::MatrixXd v = factor().triangularView<Eigen::Lower>().solve(ks);
    out.cov = kqq - v.transpose() * v;
    out.cov = 0.5 * (out.cov + out.cov.transpose());
    for (Eigen::Index j = 0; j < out.cov.rows(); ++j) out.cov(j, j) = std::max(0.0, out.cov(j, j));
    return out;
  }

 private:
  static double pivot_floor(double diag) { return diag * 1e-12; }

  void grow_storage(Eigen::Index n) {
    if (chol_.rows() >= n) return;
    const Eigen::Index cap = std::max<Eigen::Index>(n, std::max<Eigen::Index>(16, 2 * chol_.rows()));
    Eigen::MatrixXd bigger = Eigen::MatrixXd::Zero(cap, cap);
    const Eigen::Index old = std::min(chol_.rows(), n);
    bigger.topLeftCorner(old, old) = chol_.topLeftCorner(old, old);
    chol_.swap(bigger);
  }

  // Drops sample 0. The trailing block of the factor absorbs the removed
  // column through a rank-1 update.
  void evict_oldest() {
    const auto n = static_cast<Eigen::Index>(xs_.size());
    xs_.erase(xs_.begin());
    const Eigen::VectorXd rest = ys_.tail(n - 1);
    ys_ = rest;
    if (n == 1) return;
    Eigen::VectorXd w = chol_.col(0).segment(1, n - 1);
    const Eigen::MatrixXd trailing = chol_.block(1, 1, n - 1, n - 1);
    chol_.topLeftCorner(n - 1, n - 1) = trailing;
    chol_.row(n - 1).head(n).setZero();
    chol_.col(n - 1).head(n).setZero();
    auto l = chol_.topLeftCorner(n - 1, n - 1);
    for (Eigen::Index k = 0; k < n - 1; ++k) {
      const double r = std::hypot(l(k, k), w(k));
      const double c = r / l(k, k), s = w(k) / l(k, k);
      l(k, k) = r;
      for (Eigen::Index i = k + 1; i < n - 1; ++i) {
        l(i, k) = (l(i, k) + s * w(i)) / c;
        w(i) = c * w(i) - s * l(i, k);
      }
    }
  }

  void update_weights() {
    if (xs_.empty()) {
      weights_.resize(0);
      return;
    }
    const auto l = factor();
    weights_ = l.triangularView<Eigen::Lower>().solve(ys_);
    l.triangularView<Eigen::Lower>().transpose().solveInPlace(weights_);
  }

  GPHyper hyper_;
  std::size_t capacity_;
  std::vector<Action> xs_;
  Eigen::VectorXd ys_;
  Eigen::MatrixXd chol_;  // storage; only the leading size() block is meaningful
  Eigen::VectorXd weights_;  // (K + sigma_n^2 I)^-1 y
  double jitter_ = 0.0;
};

struct UcbSelection {
  std::vector<int> indices;
  bool fallback = false;  // nothing cleared the threshold; all candidates returned
};

// Candidates whose posterior mean + beta * posterior variance >= threshold.
inline UcbSelection ucb_filter(std::span<const Action> candidates, const GPModel& model, double beta, double threshold) {
  const auto post = model.posterior_diag(candidates);
  UcbSelection out;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (post.mean(i) + beta * post.var(i) >= threshold) out.indices.push_back(static_cast<int>(i));
  }
  if (out.indices.empty()) {
    out.fallback = true;
    for (std::size_t i = 0; i < candidates.size(); ++i) out.indices.push_back(static_cast<int>(i));
  }
  return out;
}

}  // namespace ipp3d
