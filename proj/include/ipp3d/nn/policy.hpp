#pragma once

#include "ipp3d/dyngraph.hpp"
#include "ipp3d/errors.hpp"
#include "ipp3d/nn/ops.hpp"
#include "ipp3d/nn/tensor.hpp"
#include "ipp3d/random.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace ipp3d::nn {

struct PolicyConfig {
  int hidden = 32;
  int heads = 4;
  int encoder_layers = 2;
  int ff_width = 128;
  double logit_clip = 10.0;
  double budget_scale = 10.0;  // remaining budget is divided by this before embedding

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

// What the policy sees at one decision: node features, the current pose's
// own feature row, the move cost to every node and the planning scalars.
struct PolicyInput {
  Eigen::MatrixXd features;                           // L x 6
  Eigen::Matrix<double, 1, kNodeFeatures> current;    // features of the current pose
  Eigen::VectorXd costs;                              // current -> node
  double budget_remaining = 0.0;
  double threshold = 0.0;

  int size() const { return static_cast<int>(features.rows()); }

  // Node i is feasible iff reaching it fits in the remaining budget.
  std::vector<std::uint8_t> feasible() const {
    std::vector<std::uint8_t> f(static_cast<std::size_t>(size()));
    for (int i = 0; i < size(); ++i) f[i] = costs(i) <= budget_remaining ? 1 : 0;
    return f;
  }
};

inline PolicyInput make_input(const DynGraph& g, double budget_remaining, double threshold) {
  PolicyInput in;
  in.features = g.features;
  in.current = g.current_features();
  in.costs = g.current_costs();
  in.budget_remaining = budget_remaining;
  in.threshold = threshold;
  return in;
}

// Named parameter tensors of the attention actor-critic.
template <typename T>
class PolicyParams {
 public:
  PolicyParams() = default;

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for projections; unit scale and
  // zero offset for normalization layers.
  static PolicyParams init(const PolicyConfig& arch, std::uint64_t seed) {
    if (arch.hidden % arch.heads != 0) throw ConfigError("hidden width must be divisible by heads");
    PolicyParams p;
    p.arch_ = arch;
    Rng rng(seed);
    const int h = arch.hidden, f = arch.ff_width;
    auto lin = [&](const std::string& name, int in, int out) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      Tensor<T> w({in, out}), b({out});
      for (auto& x : w.data) x = static_cast<T>(uniform(rng, -bound, bound));
      for (auto& x : b.data) x = static_cast<T>(uniform(rng, -bound, bound));
      p.add(name + ".weight", std::move(w));
      p.add(name + ".bias", std::move(b));
    };
    auto norm = [&](const std::string& name) {
      p.add(name + ".scale", Tensor<T>({h}, T(1)));
      p.add(name + ".offset", Tensor<T>({h}, T(0)));
    };
    auto attn = [&](const std::string& name) {
      for (const char* part : {"query", "key", "value", "out"}) lin(name + "." + part, h, h);
    };
    auto ffn = [&](const std::string& name) {
      lin(name + ".fc1", h, f);
      lin(name + ".fc2", f, h);
    };

    lin("node_embed", kNodeFeatures, h);
    for (int l = 0; l < arch.encoder_layers; ++l) {
      const std::string b = "encoder." + std::to_string(l);
      norm(b + ".norm1");
      attn(b + ".attn");
      norm(b + ".norm2");
      ffn(b + ".ffn");
    }
    norm("encoder.norm");
    lin("state.pose", kNodeFeatures, h);
    lin("state.scalars", 2, h);
    norm("decoder.norm1");
    attn("decoder.attn");
    norm("decoder.norm2");
    ffn("decoder.ffn");
    norm("decoder.norm");
    lin("pointer.query", h, h);
    lin("pointer.key", h, h);
    lin("value_head", h, 1);
    return p;
  }

  const PolicyConfig& arch() const { return arch_; }
  std::size_t count() const { return params_.size(); }
  const std::vector<std::pair<std::string, Var<T>>>& entries() const { return params_; }
  std::vector<std::pair<std::string, Var<T>>>& entries() { return params_; }

  const Var<T>& operator[](const std::string& name) const { return params_.at(index_.at(name)).second; }
  Var<T>& operator[](const std::string& name) { return params_.at(index_.at(name)).second; }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t numel() const {
    std::size_t n = 0;
    for (const auto& [_, v] : params_) n += v.value().numel();
    return n;
  }

  void zero_grad() {
    for (auto& [_, v] : params_) v.zero_grad();
  }

  bool all_finite() const {
    for (const auto& [_, v] : params_)
      for (T x : v.value().data)
        if (!std::isfinite(x)) return false;
    return true;
  }

  // Deep copy into fresh leaves of another scalar type.
  template <typename U>
  PolicyParams<U> cast() const {
    std::vector<std::pair<std::string, Tensor<U>>> ts;
    for (const auto& [name, v] : params_) ts.emplace_back(name, v.value().template cast<U>());
    return PolicyParams<U>::from_tensors(arch_, std::move(ts));
  }

  PolicyParams clone() const { return cast<T>(); }

  // Rebuilds parameters from named tensors, checking names and shapes against
  // the architecture.
  static PolicyParams from_tensors(const PolicyConfig& arch, std::vector<std::pair<std::string, Tensor<T>>> tensors) {
    const PolicyParams ref = PolicyParams::init(arch, 0);
    if (tensors.size() != ref.count()) {
      throw FormatError("expected " + std::to_string(ref.count()) + " tensors, got " + std::to_string(tensors.size()));
    }
    PolicyParams p;
    p.arch_ = arch;
    for (auto& [name, t] : tensors) {
      if (!ref.contains(name)) throw FormatError("unexpected tensor '" + name + "'");
      if (ref[name].shape() != t.shape) throw FormatError("shape mismatch for '" + name + "'");
      p.add(name, std::move(t));
    }
    return p;
  }

 private:
  void add(const std::string& name, Tensor<T> t) {
    if (index_.count(name) != 0) throw FormatError("duplicate tensor '" + name + "'");
    index_[name] = params_.size();
    params_.emplace_back(name, Var<T>(std::move(t), true));
  }

  PolicyConfig arch_;
  std::vector<std::pair<std::string, Var<T>>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
struct PolicyOutput {
  Var<T> log_probs;  // [1, L], -inf on infeasible nodes
  Var<T> value;      // [1, 1]
  std::vector<std::uint8_t> feasible;

  std::vector<double> probs() const {
    std::vector<double> p;
    p.reserve(log_probs.value().numel());
    for (T l : log_probs.value().data) p.push_back(std::exp(static_cast<double>(l)));
    return p;
  }
};

namespace detail {

template <typename T>
Var<T> dense(const PolicyParams<T>& p, const std::string& name, const Var<T>& x) {
  return linear(x, p[name + ".weight"], p[name + ".bias"]);
}

template <typename T>
Var<T> norm(const PolicyParams<T>& p, const std::string& name, const Var<T>& x) {
  return layer_norm(x, p[name + ".scale"], p[name + ".offset"]);
}

template <typename T>
Var<T> mha(const PolicyParams<T>& p, const std::string& name, const Var<T>& queries, const Var<T>& context) {
  const auto q = dense(p, name + ".query", queries);
  const auto k = dense(p, name + ".key", context);
  const auto v = dense(p, name + ".value", context);
  return dense(p, name + ".out", attention(q, k, v, p.arch().heads));
}

template <typename T>
Var<T> ffn(const PolicyParams<T>& p, const std::string& name, const Var<T>& x) {
  return dense(p, name + ".fc2", relu(dense(p, name + ".fc1", x)));
}

template <typename T>
Var<T> constant(const auto& m) {
  Tensor<T> t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) t.data[i * m.cols() + j] = static_cast<T>(m(i, j));
  return Var<T>(std::move(t));
}

}  // namespace detail

// Encoder: node embedding plus pre-norm self-attention blocks. Decoder: the
// planning state queries the encoded nodes through cross-attention, then a
// pointer layer scores every node and a linear head estimates the value.
template <typename T>
PolicyOutput<T> forward(const PolicyParams<T>& p, const PolicyInput& in) {
  using namespace detail;
  PolicyOutput<T> out;
  out.feasible = in.feasible();
  bool any = false;
  for (auto f : out.feasible) any = any || f;
  if (!any) throw AllMasked("no node is reachable within the remaining budget");

  const auto& arch = p.arch();
  Var<T> nodes = dense(p, "node_embed", constant<T>(in.features));
  for (int l = 0; l < arch.encoder_layers; ++l) {
    const std::string b = "encoder." + std::to_string(l);
    const auto y = norm(p, b + ".norm1", nodes);
    nodes = add(nodes, mha(p, b + ".attn", y, y));
    nodes = add(nodes, ffn(p, b + ".ffn", norm(p, b + ".norm2", nodes)));
  }
  nodes = norm(p, "encoder.norm", nodes);

  Eigen::Matrix<double, 1, 2> scalars(in.budget_remaining / arch.budget_scale, in.threshold);
  Var<T> state = add(dense(p, "state.pose", constant<T>(in.current)), dense(p, "state.scalars", constant<T>(scalars)));
  state = add(state, mha(p, "decoder.attn", norm(p, "decoder.norm1", state), nodes));
  state = add(state, ffn(p, "decoder.ffn", norm(p, "decoder.norm2", state)));
  state = norm(p, "decoder.norm", state);

  const auto logits = pointer_logits(dense(p, "pointer.query", state), dense(p, "pointer.key", nodes),
                                     static_cast<T>(arch.logit_clip));
  out.log_probs = masked_log_softmax(logits, std::span<const std::uint8_t>(out.feasible));
  out.value = dense(p, "value_head", state);
  return out;
}

// Inverse-CDF draw; returns (index, log-probability).
inline std::pair<int, double> sample_action(std::span<const double> probs, Rng& rng) {
  const double u = uniform(rng, 0.0, 1.0);
  double acc = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last = static_cast<int>(i);
    acc += probs[i];
    if (u < acc) return {last, std::log(probs[i])};
  }
  if (last < 0) throw AllMasked("empty distribution");
  return {last, std::log(probs[last])};
}

// Most probable node; ties go to the lowest index.
inline int argmax_action(std::span<const double> probs) {
  int best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace ipp3d::nn
