#pragma once

#include "ipp3d/nn/policy.hpp"
#include "ipp3d/nn/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace ipp3d::nn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double decay = 0.96;        // multiplicative lr decay ...
  int decay_every = 32;       // ... applied every this many steps
  double max_grad_norm = 0.0;  // 0 disables clipping
};

// Adam with bias correction and a staircase learning-rate schedule.
template <typename T>
class Adam {
 public:
  Adam() = default;
  Adam(const PolicyParams<T>& params, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& [_, v] : params.entries()) {
      m_.emplace_back(v.value().shape);
      v_.emplace_back(v.value().shape);
    }
  }

  const AdamConfig& config() const { return cfg_; }
  std::int64_t steps() const { return steps_; }

  // Learning rate used by the next step.
  double lr() const { return lr_at(steps_); }
  double lr_at(std::int64_t step) const {
    return cfg_.lr * std::pow(cfg_.decay, static_cast<double>(step / cfg_.decay_every));
  }

  // Applies one update from the accumulated gradients; returns the gradient
  // norm before clipping.
  double step(PolicyParams<T>& params) {
    double sq = 0.0;
    for (auto& [_, v] : params.entries())
      for (T g : v.grad().data) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    const double clip = cfg_.max_grad_norm > 0.0 && norm > cfg_.max_grad_norm ? cfg_.max_grad_norm / norm : 1.0;

    const double lr = lr_at(steps_);
    ++steps_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    auto& entries = params.entries();
    for (std::size_t k = 0; k < entries.size(); ++k) {
      auto& value = entries[k].second.value().data;
      const auto& grad = entries[k].second.grad().data;
      auto& m = m_[k].data;
      auto& v = v_[k].data;
      for (std::size_t i = 0; i < value.size(); ++i) {
        const double g = static_cast<double>(grad[i]) * clip;
        m[i] = static_cast<T>(cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g);
        v[i] = static_cast<T>(cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g);
        value[i] -= static_cast<T>(lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps));
      }
    }
    return norm;
  }

  // Moment tensors named "<param>.m" / "<param>.v" for checkpointing.
  std::vector<std::pair<std::string, Tensor<T>>> state(const PolicyParams<T>& params) const {
    std::vector<std::pair<std::string, Tensor<T>>> out;
    for (std::size_t k = 0; k < m_.size(); ++k) {
      out.emplace_back(params.entries()[k].first + ".m", m_[k]);
      out.emplace_back(params.entries()[k].first + ".v", v_[k]);
    }
    return out;
  }

  void restore(std::vector<std::pair<std::string, Tensor<T>>> state, std::int64_t steps) {
    if (state.size() != 2 * m_.size()) throw FormatError("optimizer state does not match parameters");
    for (std::size_t k = 0; k < m_.size(); ++k) {
      if (state[2 * k].second.shape != m_[k].shape || state[2 * k + 1].second.shape != v_[k].shape)
        throw FormatError("optimizer state shape mismatch at " + state[2 * k].first);
      m_[k] = std::move(state[2 * k].second);
      v_[k] = std::move(state[2 * k + 1].second);
    }
    steps_ = steps;
  }

 private:
  AdamConfig cfg_;
  std::vector<Tensor<T>> m_, v_;
  std::int64_t steps_ = 0;
};

}  // namespace ipp3d::nn
