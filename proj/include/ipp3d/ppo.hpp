#pragma once

#include "ipp3d/env.hpp"
#include "ipp3d/errors.hpp"
#include "ipp3d/nn/adam.hpp"
#include "ipp3d/nn/ops.hpp"
#include "ipp3d/nn/policy.hpp"
#include "ipp3d/parallel.hpp"
#include "ipp3d/random.hpp"
#include "ipp3d/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace ipp3d {

struct TrainConfig {
  int n_envs = 12;
  int epochs = 8;
  int batch = 64;
  double lr = 1e-4;
  double lr_decay = 0.96;
  int lr_decay_every = 32;  // optimizer steps
  double clip = 0.2;
  double gamma = 0.99;
  double lambda = 0.95;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  double max_grad_norm = 0.0;  // 0 disables clipping
  double budget_min = 7.0;
  double budget_max = 9.0;
  long total_interactions = 50000;
  int checkpoint_every = 10;  // iterations
};

struct RolloutStep {
  nn::PolicyInput input;
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  bool done = false;  // last step of its episode
};

struct EpisodeSummary {
  std::uint64_t world_seed = 0;
  double budget = 0.0;
  double ret = 0.0;
  double pct_targets = 0.0;
  int steps = 0;
};

struct RolloutBuffer {
  std::vector<RolloutStep> steps;
  std::vector<EpisodeSummary> episodes;

  std::size_t size() const { return steps.size(); }
  void append(RolloutBuffer&& other) {
    steps.insert(steps.end(), std::make_move_iterator(other.steps.begin()), std::make_move_iterator(other.steps.end()));
    episodes.insert(episodes.end(), other.episodes.begin(), other.episodes.end());
  }
};

// One training episode sampled from the policy.
inline RolloutBuffer collect_episode(const nn::PolicyParams<double>& params, const World& world, double budget,
                                     const EnvConfig& env_cfg, std::uint64_t seed) {
  nn::NoGradGuard guard;
  RolloutBuffer buf;
  Env env(world, budget, env_cfg, derive_seed(seed, 0));
  Rng rng(derive_seed(seed, 1));
  EpisodeSummary summary{world.seed, budget};
  while (!env.done()) {
    RolloutStep s;
    s.input = env.policy_input();
    nn::PolicyOutput<double> out;
    try {
      out = nn::forward(params, s.input);
    } catch (const AllMasked&) {
      break;
    }
    const auto probs = out.probs();
    const auto [index, _] = nn::sample_action(probs, rng);
    s.action = index;
    s.log_prob = out.log_probs.value().data[static_cast<std::size_t>(index)];
    s.value = out.value.item();
    const auto r = env.step(index);
    s.reward = r.reward.total;
    summary.ret += s.reward;
    buf.steps.push_back(std::move(s));
  }
  if (!buf.steps.empty()) buf.steps.back().done = true;
  summary.pct_targets = env.pct_targets();
  summary.steps = static_cast<int>(buf.steps.size());
  buf.episodes.push_back(summary);
  return buf;
}

// Env e of iteration `iteration` uses its own world, budget and episode
// streams, all derived from (seed, iteration, e).
inline RolloutBuffer collect_rollouts(const nn::PolicyParams<double>& params, const TrainConfig& cfg,
                                      const EnvConfig& env_cfg, const WorldGenConfig& world_cfg, std::uint64_t seed,
                                      long iteration, int jobs = 1) {
  std::vector<RolloutBuffer> parts(static_cast<std::size_t>(cfg.n_envs));
  parallel_for(cfg.n_envs, jobs, [&](int e) {
    const std::uint64_t env_seed = derive_seed(seed, static_cast<std::uint64_t>(iteration), static_cast<std::uint64_t>(e));
    const World world = generate_world(world_cfg, derive_seed(env_seed, 0));
    Rng rng(derive_seed(env_seed, 1));
    const double budget = uniform(rng, cfg.budget_min, cfg.budget_max);
    parts[static_cast<std::size_t>(e)] = collect_episode(params, world, budget, env_cfg, derive_seed(env_seed, 2));
  });
  RolloutBuffer buf;
  for (auto& p : parts) buf.append(std::move(p));
  return buf;
}

// Generalized advantage estimation over complete episodes; the value after a
// terminal step is 0.
inline std::vector<double> gae(std::span<const double> rewards, std::span<const double> values,
                               std::span<const std::uint8_t> dones, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  std::vector<double> adv(n);
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double next_value = dones[k] || k + 1 == n ? 0.0 : values[k + 1];
    if (dones[k]) running = 0.0;
    const double delta = rewards[k] + gamma * next_value - values[k];
    running = delta + gamma * lambda * running;
    adv[k] = running;
  }
  return adv;
}

inline void normalize(std::vector<double>& x) {
  if (x.empty()) return;
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(x.size()));
  for (double& v : x) v = (v - mean) / (sd + 1e-8);
}

struct Advantages {
  std::vector<double> returns;     // raw advantage + value
  std::vector<double> advantages;  // normalized to mean 0, variance 1
};

inline Advantages advantages(const RolloutBuffer& buf, double gamma, double lambda) {
  std::vector<double> r, v;
  std::vector<std::uint8_t> d;
  for (const auto& s : buf.steps) {
    r.push_back(s.reward);
    v.push_back(s.value);
    d.push_back(s.done ? 1 : 0);
  }
  Advantages out;
  out.advantages = gae(r, v, d, gamma, lambda);
  out.returns.resize(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out.returns[i] = out.advantages[i] + v[i];
  normalize(out.advantages);
  return out;
}

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_frac = 0.0;
  double lr = 0.0;  // learning rate of the last optimizer step
  long optimizer_steps = 0;
};

struct SampleLoss {
  nn::Var<double> total;
  double policy = 0.0, value = 0.0, entropy = 0.0, log_ratio = 0.0;
  bool clipped = false;
};

// Clipped-surrogate, value and entropy terms for one stored step.
inline SampleLoss sample_loss(const nn::PolicyParams<double>& params, const RolloutStep& s, double advantage,
                              double ret, const TrainConfig& cfg) {
  using namespace nn;
  const auto out = forward(params, s.input);
  const auto logp = pick(out.log_probs, s.action);
  const auto ratio = exp(add_scalar(logp, -s.log_prob));
  const auto surr1 = scale(ratio, advantage);
  const auto surr2 = scale(clamp(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), advantage);
  const auto policy = scale(minimum(surr1, surr2), -1.0);
  const auto value = square(add_scalar(out.value, -ret));
  const auto ent = entropy(out.log_probs);
  SampleLoss l;
  l.total = policy + cfg.value_coef * value - cfg.entropy_coef * ent;
  l.policy = policy.item();
  l.value = value.item();
  l.entropy = ent.item();
  l.log_ratio = logp.item() - s.log_prob;
  l.clipped = std::abs(ratio.item() - 1.0) > cfg.clip;
  return l;
}

// `epochs` passes over shuffled minibatches; the trailing partial batch is
// kept. On a non-finite loss the parameters and optimizer are restored and
// NonFiniteLoss is thrown.
inline UpdateStats ppo_update(nn::PolicyParams<double>& params, nn::Adam<double>& opt, const RolloutBuffer& buf,
                              const Advantages& adv, const TrainConfig& cfg, Rng& rng) {
  UpdateStats st;
  const std::size_t n = buf.size();
  if (n == 0) return st;
  const auto params_backup = params.clone();
  const auto opt_backup = opt;
  auto fail = [&](const char* what) {
    params = params_backup.clone();
    opt = opt_backup;
    throw NonFiniteLoss(what);
  };

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  long samples = 0;
  const long steps_before = opt.steps();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch));
      const double weight = 1.0 / static_cast<double>(end - start);
      params.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        const auto l = sample_loss(params, buf.steps[i], adv.advantages[i], adv.returns[i], cfg);
        if (!std::isfinite(l.total.item())) fail("non-finite loss");
        nn::backward(l.total, weight);
        st.policy_loss += l.policy;
        st.value_loss += l.value;
        st.entropy += l.entropy;
        st.approx_kl += -l.log_ratio;
        st.clip_frac += l.clipped ? 1.0 : 0.0;
        ++samples;
      }
      st.lr = opt.lr();
      const double norm = opt.step(params);
      if (!std::isfinite(norm) || !params.all_finite()) fail("non-finite gradient");
    }
  }
  const double inv = 1.0 / static_cast<double>(samples);
  st.policy_loss *= inv;
  st.value_loss *= inv;
  st.entropy *= inv;
  st.approx_kl *= inv;
  st.clip_frac *= inv;
  st.optimizer_steps = opt.steps() - steps_before;
  return st;
}

}  // namespace ipp3d
