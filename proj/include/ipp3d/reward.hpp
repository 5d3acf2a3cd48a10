#pragma once

#include "ipp3d/errors.hpp"
#include "ipp3d/gp.hpp"

#include <span>
#include <vector>

namespace ipp3d {

struct RewardConfig {
  double exploration_weight = 1.0;   // alpha
  double information_weight = 0.01;  // delta
  double ucb_beta = 1.0;
  double ucb_threshold = 0.4;        // mu_th
};

// Relative drop of the posterior covariance trace over the high-interest set
// once the step's samples are fused.
inline double exploration_reward(std::span<const Action> interest, const GPModel& before, const GPModel& after) {
  const double tr_before = before.posterior_diag(interest).var.sum();
  if (tr_before <= 1e-12) throw DegenerateTrace("posterior trace over the interest set has collapsed");
  const double tr_after = after.posterior_diag(interest).var.sum();
  return (tr_before - tr_after) / tr_before;
}

// Raw count of targets discovered by the step.
inline double information_reward(int new_targets) { return static_cast<double>(new_targets); }

inline double total_reward(const RewardConfig& cfg, double exploration, double information) {
  return cfg.exploration_weight * exploration + cfg.information_weight * information;
}

struct StepReward {
  double exploration = 0.0;
  double information = 0.0;
  double total = 0.0;
  bool degenerate = false;
};

// Full per-step reward. `candidates` are the pre-step graph nodes, `before`
// the pre-step GP and `after` the GP with the step's observations fused.
inline StepReward step_reward(const RewardConfig& cfg, std::span<const Action> candidates, const GPModel& before,
                              const GPModel& after, int new_targets) {
  StepReward r;
  const auto selection = ucb_filter(candidates, before, cfg.ucb_beta, cfg.ucb_threshold);
  std::vector<Action> interest;
  interest.reserve(selection.indices.size());
  for (int i : selection.indices) interest.push_back(candidates[i]);
  try {
    r.exploration = exploration_reward(interest, before, after);
  } catch (const DegenerateTrace&) {
    r.exploration = 0.0;
    r.degenerate = true;
  }
  r.information = information_reward(new_targets);
  r.total = total_reward(cfg, r.exploration, r.information);
  return r;
}

}  // namespace ipp3d
