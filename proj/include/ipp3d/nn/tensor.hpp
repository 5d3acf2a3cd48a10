#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace ipp3d::nn {

// Dense row-major tensor of rank 1 or 2. Rank-1 tensors act as a single row
// in matrix operations.
template <typename T>
struct Tensor {
  using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  // Aligned storage keeps Eigen's vectorized kernels on the same code path
  // for every allocation, so results do not depend on heap addresses.
  using Storage = std::vector<T, Eigen::aligned_allocator<T>>;

  std::vector<int> shape;
  Storage data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, T fill = T(0)) : shape(std::move(s)), data(numel_of(shape), fill) {}

  static std::size_t numel_of(const std::vector<int>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
  }

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
  int rows() const { return shape.size() == 2 ? shape[0] : 1; }
  int cols() const { return shape.empty() ? 1 : shape.back(); }

  Eigen::Map<Matrix> mat() { return {data.data(), rows(), cols()}; }
  Eigen::Map<const Matrix> mat() const { return {data.data(), rows(), cols()}; }

  void zero() { std::fill(data.begin(), data.end(), T(0)); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  static Tensor from_matrix(const Matrix& m) {
    Tensor t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
    t.mat() = m;
    return t;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

namespace detail {
inline thread_local bool grad_mode = true;
}

// Disables graph recording for the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() : prev_(detail::grad_mode) { detail::grad_mode = false; }
  ~NoGradGuard() { detail::grad_mode = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool leaf = true;

  // Lazily allocated gradient buffer.
  Tensor<T>& g() {
    if (grad.empty()) grad = Tensor<T>(value.shape);
    return grad;
  }
};

// Handle to a node of the computation graph.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad = Tensor<T>(node_->value.shape);
  }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& grad() { return node_->g(); }
  bool requires_grad() const { return node_->requires_grad; }
  const std::vector<int>& shape() const { return node_->value.shape; }
  T item() const { return node_->value.data.at(0); }
  void zero_grad() { node_->g().zero(); }

  std::shared_ptr<Node<T>> node() const { return node_; }

  // Builds an interior node; records parents and the backward rule only when
  // some parent tracks gradients and grad mode is on.
  static Var make(Tensor<T> value, std::vector<Var> parents, std::function<void(Node<T>&)> backward_fn) {
    Var out(std::move(value));
    bool track = detail::grad_mode && std::any_of(parents.begin(), parents.end(), [](const Var& p) { return p.requires_grad(); });
    if (track) {
      out.node_->requires_grad = true;
      out.node_->leaf = false;
      for (auto& p : parents) out.node_->parents.push_back(p.node_);
      out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
  }

 private:
  std::shared_ptr<Node<T>> node_;
};

// Reverse-mode accumulation from a scalar. Leaf gradients accumulate across
// calls; interior gradients are reset at the start of each call.
template <typename T>
void backward(const Var<T>& loss, T seed = T(1)) {
  if (loss.value().numel() != 1) throw std::invalid_argument("backward() needs a scalar loss");
  if (!loss.requires_grad()) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node<T>* p = n->parents[next++].get();
      if (p->requires_grad && !p->leaf && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  for (Node<T>* n : order) {
    if (n->grad.empty()) n->g();
    else n->grad.zero();
  }
  loss.node()->g().data[0] = seed;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

}  // namespace ipp3d::nn
