#pragma once

#include "ipp3d/nn/tensor.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace ipp3d::nn {

template <typename T>
using RowMatrix = typename Tensor<T>::Matrix;

namespace detail {
template <typename T>
bool wants(const Node<T>& n, std::size_t i) {
  return n.parents[i]->requires_grad;
}
}  // namespace detail

// x W + b, with x [n, in], W [in, out], b [out].
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
  Tensor<T> y({x.value().rows(), w.value().cols()});
  y.mat().noalias() = x.value().mat() * w.value().mat();
  y.mat().rowwise() += b.value().mat().row(0);
  return Var<T>::make(std::move(y), {x, w, b}, [](Node<T>& n) {
    const auto& dy = n.grad.mat();
    if (detail::wants(n, 0)) n.parents[0]->g().mat().noalias() += dy * n.parents[1]->value.mat().transpose();
    if (detail::wants(n, 1)) n.parents[1]->g().mat().noalias() += n.parents[0]->value.mat().transpose() * dy;
    if (detail::wants(n, 2)) n.parents[2]->g().mat().row(0) += dy.colwise().sum();
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Tensor<T> y = a.value();
  y.mat() += b.value().mat();
  return Var<T>::make(std::move(y), {a, b}, [](Node<T>& n) {
    for (std::size_t i = 0; i < 2; ++i)
      if (detail::wants(n, i)) n.parents[i]->g().mat() += n.grad.mat();
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> y = x.value();
  y.mat() = y.mat().cwiseMax(T(0));
  return Var<T>::make(std::move(y), {x}, [](Node<T>& n) {
    auto& dx = n.parents[0]->g().data;
    const auto& xv = n.parents[0]->value.data;
    for (std::size_t i = 0; i < dx.size(); ++i)
      if (xv[i] > T(0)) dx[i] += n.grad.data[i];
  });
}

// Row-wise normalization with learned scale and offset.
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps = T(1e-5)) {
  const int r = x.value().rows(), c = x.value().cols();
  Tensor<T> y({r, c});
  auto xhat = std::make_shared<RowMatrix<T>>(r, c);
  auto inv_std = std::make_shared<std::vector<T>>(r);
  const auto xm = x.value().mat();
  for (int i = 0; i < r; ++i) {
    const T mu = xm.row(i).mean();
    const T var = (xm.row(i).array() - mu).square().mean();
    (*inv_std)[i] = T(1) / std::sqrt(var + eps);
    xhat->row(i) = (xm.row(i).array() - mu) * (*inv_std)[i];
  }
  y.mat() = (xhat->array().rowwise() * gamma.value().mat().row(0).array()).rowwise() + beta.value().mat().row(0).array();
  return Var<T>::make(std::move(y), {x, gamma, beta}, [xhat, inv_std](Node<T>& n) {
    const auto dy = n.grad.mat();
    if (detail::wants(n, 1)) n.parents[1]->g().mat().row(0) += (dy.array() * xhat->array()).colwise().sum().matrix();
    if (detail::wants(n, 2)) n.parents[2]->g().mat().row(0) += dy.colwise().sum();
    if (detail::wants(n, 0)) {
      const auto g = n.parents[1]->value.mat().row(0).array();
      auto dx = n.parents[0]->g().mat();
      for (Eigen::Index i = 0; i < dy.rows(); ++i) {
        const auto dxhat = (dy.row(i).array() * g).eval();
        const T m1 = dxhat.mean();
        const T m2 = (dxhat * xhat->row(i).array()).mean();
        dx.row(i).array() += (*inv_std)[i] * (dxhat - m1 - xhat->row(i).array() * m2);
      }
    }
  });
}

// Multi-head scaled dot-product attention. q [nq, H], k and v [nk, H];
// head h uses columns [h*H/heads, (h+1)*H/heads).
template <typename T>
Var<T> attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, int heads) {
  const int nq = q.value().rows(), nk = k.value().rows(), width = q.value().cols();
  const int d = width / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  auto weights = std::make_shared<std::vector<RowMatrix<T>>>(heads);
  Tensor<T> out({nq, width});
  const auto qm = q.value().mat(), km = k.value().mat(), vm = v.value().mat();
  for (int h = 0; h < heads; ++h) {
    RowMatrix<T> s = (qm.middleCols(h * d, d) * km.middleCols(h * d, d).transpose()) * scale;
    for (int i = 0; i < nq; ++i) {
      const T mx = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - mx).exp();
      s.row(i) /= s.row(i).sum();
    }
    out.mat().middleCols(h * d, d).noalias() = s * vm.middleCols(h * d, d);
    (*weights)[h] = std::move(s);
  }
  return Var<T>::make(std::move(out), {q, k, v}, [weights, heads, d, scale, nk](Node<T>& n) {
    const auto dout = n.grad.mat();
    const auto qm = n.parents[0]->value.mat(), km = n.parents[1]->value.mat(), vm = n.parents[2]->value.mat();
    for (int h = 0; h < heads; ++h) {
      const RowMatrix<T>& a = (*weights)[h];
      const auto doh = dout.middleCols(h * d, d);
      if (detail::wants(n, 2)) n.parents[2]->g().mat().middleCols(h * d, d).noalias() += a.transpose() * doh;
      if (!detail::wants(n, 0) && !detail::wants(n, 1)) continue;
      RowMatrix<T> da = doh * vm.middleCols(h * d, d).transpose();
      const auto rowdot = (da.array() * a.array()).rowwise().sum().eval();
      RowMatrix<T> ds = (a.array() * (da.array().colwise() - rowdot)) * scale;
      if (detail::wants(n, 0)) n.parents[0]->g().mat().middleCols(h * d, d).noalias() += ds * km.middleCols(h * d, d);
      if (detail::wants(n, 1)) n.parents[1]->g().mat().middleCols(h * d, d).noalias() += ds.transpose() * qm.middleCols(h * d, d);
    }
    (void)nk;
  });
}

// clip * tanh(q k^T / sqrt(H)) for a single query row q [1, H] against k [n, H].
template <typename T>
Var<T> pointer_logits(const Var<T>& q, const Var<T>& k, T clip) {
  const int width = q.value().cols();
  const T scale = T(1) / std::sqrt(static_cast<T>(width));
  Tensor<T> out({1, k.value().rows()});
  auto th = std::make_shared<RowMatrix<T>>((q.value().mat() * k.value().mat().transpose() * scale).array().tanh().matrix());
  out.mat() = *th * clip;
  return Var<T>::make(std::move(out), {q, k}, [th, clip, scale](Node<T>& n) {
    const RowMatrix<T> ds = (n.grad.mat().array() * clip * (T(1) - th->array().square())).matrix() * scale;
    if (detail::wants(n, 0)) n.parents[0]->g().mat().noalias() += ds * n.parents[1]->value.mat();
    if (detail::wants(n, 1)) n.parents[1]->g().mat().noalias() += ds.transpose() * n.parents[0]->value.mat();
  });
}

// Log-softmax over one row with infeasible entries pinned to -inf (exact zero
// probability, zero gradient).
template <typename T>
Var<T> masked_log_softmax(const Var<T>& logits, std::span<const std::uint8_t> feasible) {
  const auto z = logits.value().mat();
  const int n = static_cast<int>(z.cols());
  T mx = -std::numeric_limits<T>::infinity();
  for (int i = 0; i < n; ++i)
    if (feasible[i]) mx = std::max(mx, z(0, i));
  T total = 0;
  for (int i = 0; i < n; ++i)
    if (feasible[i]) total += std::exp(z(0, i) - mx);
  const T lse = mx + std::log(total);
  Tensor<T> out({1, n}, -std::numeric_limits<T>::infinity());
  for (int i = 0; i < n; ++i)
    if (feasible[i]) out.data[i] = z(0, i) - lse;
  std::vector<std::uint8_t> mask(feasible.begin(), feasible.end());
  return Var<T>::make(std::move(out), {logits}, [mask = std::move(mask)](Node<T>& n) {
    const auto& lp = n.value.data;
    const auto& g = n.grad.data;
    T gsum = 0;
    for (std::size_t i = 0; i < lp.size(); ++i)
      if (mask[i]) gsum += g[i];
    auto& dz = n.parents[0]->g().data;
    for (std::size_t i = 0; i < lp.size(); ++i)
      if (mask[i]) dz[i] += g[i] - std::exp(lp[i]) * gsum;
  });
}

// Entropy of a categorical given as log-probabilities (-inf entries skipped).
template <typename T>
Var<T> entropy(const Var<T>& logp) {
  T h = 0;
  for (T l : logp.value().data)
    if (std::isfinite(l)) h -= std::exp(l) * l;
  return Var<T>::make(Tensor<T>({1, 1}, h), {logp}, [](Node<T>& n) {
    const T g = n.grad.data[0];
    const auto& lp = n.parents[0]->value.data;
    auto& dl = n.parents[0]->g().data;
    for (std::size_t i = 0; i < lp.size(); ++i)
      if (std::isfinite(lp[i])) dl[i] -= g * std::exp(lp[i]) * (lp[i] + T(1));
  });
}

// ---------------------------------------------------------------------------
// Scalar helpers; every operand is a 1x1 tensor.

template <typename T>
Var<T> scalar(T v) {
  return Var<T>(Tensor<T>({1, 1}, v));
}

template <typename T>
Var<T> pick(const Var<T>& x, int index) {
  return Var<T>::make(Tensor<T>({1, 1}, x.value().data.at(index)), {x}, [index](Node<T>& n) {
    n.parents[0]->g().data[index] += n.grad.data[0];
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T c) {
  Tensor<T> y = x.value();
  y.mat() *= c;
  return Var<T>::make(std::move(y), {x}, [c](Node<T>& n) { n.parents[0]->g().mat() += n.grad.mat() * c; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& x, T c) {
  Tensor<T> y = x.value();
  y.mat().array() += c;
  return Var<T>::make(std::move(y), {x}, [](Node<T>& n) { n.parents[0]->g().mat() += n.grad.mat(); });
}

template <typename T>
Var<T> exp(const Var<T>& x) {
  Tensor<T> y = x.value();
  y.mat() = y.mat().array().exp().matrix();
  return Var<T>::make(std::move(y), {x}, [](Node<T>& n) {
    n.parents[0]->g().mat().array() += n.grad.mat().array() * n.value.mat().array();
  });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  Tensor<T> y = x.value();
  y.mat() = y.mat().array().square().matrix();
  return Var<T>::make(std::move(y), {x}, [](Node<T>& n) {
    n.parents[0]->g().mat().array() += T(2) * n.grad.mat().array() * n.parents[0]->value.mat().array();
  });
}

// Clamp to [lo, hi]; derivative 1 strictly inside the interval, 0 elsewhere.
template <typename T>
Var<T> clamp(const Var<T>& x, T lo, T hi) {
  const T v = x.item();
  const bool inside = v > lo && v < hi;
  return Var<T>::make(Tensor<T>({1, 1}, std::min(std::max(v, lo), hi)), {x}, [inside](Node<T>& n) {
    if (inside) n.parents[0]->g().data[0] += n.grad.data[0];
  });
}

// Elementwise minimum of two scalars; ties route the gradient to `b`.
template <typename T>
Var<T> minimum(const Var<T>& a, const Var<T>& b) {
  const bool first = a.item() < b.item();
  return Var<T>::make(Tensor<T>({1, 1}, first ? a.item() : b.item()), {a, b}, [first](Node<T>& n) {
    const std::size_t i = first ? 0 : 1;
    if (detail::wants(n, i)) n.parents[i]->g().data[0] += n.grad.data[0];
  });
}

template <typename T>
Var<T> sum(std::span<const Var<T>> terms) {
  T total = 0;
  for (const auto& t : terms) total += t.item();
  return Var<T>::make(Tensor<T>({1, 1}, total), std::vector<Var<T>>(terms.begin(), terms.end()), [](Node<T>& n) {
    for (auto& p : n.parents)
      if (p->requires_grad) p->g().data[0] += n.grad.data[0];
  });
}

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T>
Var<T> operator*(T c, const Var<T>& x) { return scale(x, c); }
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) { return add(a, scale(b, T(-1))); }

}  // namespace ipp3d::nn
