#pragma once

#include "ipp3d/env.hpp"
#include "ipp3d/errors.hpp"
#include "ipp3d/nn/policy.hpp"
#include "ipp3d/random.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace ipp3d {

inline std::vector<int> feasible_nodes(const DynGraph& g, double budget_remaining) {
  std::vector<int> out;
  const Eigen::VectorXd c = g.current_costs();
  for (int i = 0; i < g.size(); ++i)
    if (c(i) <= budget_remaining) out.push_back(i);
  if (out.empty()) throw AllMasked("no node is reachable within the remaining budget");
  return out;
}

inline int plan_random(const DynGraph& g, double budget_remaining, Rng& rng) {
  const auto f = feasible_nodes(g, budget_remaining);
  return f[uniform_index(rng, f.size())];
}

// Highest mean + beta * variance among feasible nodes; lowest index on ties.
inline int plan_greedy_ucb(const DynGraph& g, double budget_remaining, double beta) {
  int best = -1;
  double best_score = 0.0;
  for (int i : feasible_nodes(g, budget_remaining)) {
    const double s = g.features(i, 4) + beta * g.features(i, 5);
    if (best < 0 || s > best_score) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

template <typename T>
int plan_policy(const nn::PolicyParams<T>& params, const nn::PolicyInput& in) {
  nn::NoGradGuard guard;
  return nn::argmax_action(nn::forward(params, in).probs());
}

class Planner {
 public:
  virtual ~Planner() = default;
  virtual std::string name() const = 0;
  // Called once per episode with the planner's own seed.
  virtual void reset(std::uint64_t /*seed*/) {}
  virtual int plan(Env& env) = 0;
};

class RandomPlanner final : public Planner {
 public:
  std::string name() const override { return "random"; }
  void reset(std::uint64_t seed) override { rng_.seed(seed); }
  int plan(Env& env) override { return plan_random(env.graph(), env.belief().budget_remaining, rng_); }

 private:
  Rng rng_;
};

class GreedyUcbPlanner final : public Planner {
 public:
  explicit GreedyUcbPlanner(double beta) : beta_(beta) {}
  std::string name() const override { return "greedy"; }
  int plan(Env& env) override { return plan_greedy_ucb(env.graph(), env.belief().budget_remaining, beta_); }

 private:
  double beta_;
};

template <typename T>
class PolicyPlanner final : public Planner {
 public:
  explicit PolicyPlanner(std::shared_ptr<const nn::PolicyParams<T>> params) : params_(std::move(params)) {}
  std::string name() const override { return "policy"; }
  int plan(Env& env) override { return plan_policy(*params_, env.policy_input()); }

 private:
  std::shared_ptr<const nn::PolicyParams<T>> params_;
};

struct StepLog {
  Action action;
  double cost = 0.0;
  int new_targets = 0;
  double pct_targets = 0.0;  // cumulative
  double budget_used = 0.0;
  double replan_ms = 0.0;    // graph construction plus the planner call
};

struct EpisodeLog {
  Action start;
  std::vector<StepLog> steps;
  double start_pct = 0.0;  // after the start sweep
  double pct_targets = 0.0;
  double budget = 0.0;
  double wall_ms = 0.0;
  bool abnormal = false;
  std::string error;

  double mean_replan_ms() const {
    if (steps.empty()) return 0.0;
    double s = 0.0;
    for (const auto& st : steps) s += st.replan_ms;
    return s / static_cast<double>(steps.size());
  }
};

// Runs one mission to termination. `seed` drives graph sampling; the planner
// gets an independent stream derived from it.
inline EpisodeLog run_episode(Planner& planner, const World& world, double budget, const EnvConfig& cfg,
                              std::uint64_t seed) {
  using Clock = std::chrono::steady_clock;
  const auto ms = [](Clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };
  const auto t0 = Clock::now();

  EpisodeLog log;
  log.budget = budget;
  log.start = cfg.mission.start;
  planner.reset(derive_seed(seed, 1));
  Env env(world, budget, cfg, derive_seed(seed, 0));
  log.start_pct = env.pct_targets();
  try {
    while (!env.done()) {
      const auto r0 = Clock::now();
      int choice = -1;
      try {
        env.graph();
        choice = planner.plan(env);
      } catch (const AllMasked&) {
        break;
      }
      const double replan = ms(Clock::now() - r0);
      const auto res = env.step(choice);
      log.steps.push_back({res.action, res.cost, res.new_targets, env.pct_targets(), env.belief().cost_spent, replan});
    }
  } catch (const Error& e) {
    log.abnormal = true;
    log.error = e.what();
  }
  log.pct_targets = env.pct_targets();
  log.wall_ms = ms(Clock::now() - t0);
  return log;
}

}  // namespace ipp3d
