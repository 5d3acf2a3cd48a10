#pragma once

#include "ipp3d/belief.hpp"
#include "ipp3d/dyngraph.hpp"
#include "ipp3d/gp.hpp"
#include "ipp3d/nn/policy.hpp"
#include "ipp3d/random.hpp"
#include "ipp3d/reward.hpp"
#include "ipp3d/world.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace ipp3d {

struct EnvConfig {
  MissionConfig mission;
  GPHyper gp;
  std::size_t gp_capacity = 1024;
  GraphConfig graph;
  RewardConfig reward;
};

struct StepResult {
  Action action;
  double cost = 0.0;
  int new_targets = 0;
  StepReward reward;
  bool done = false;
};

// One planning episode on a fixed world: belief, GP and the dynamic graph of
// the current decision. Owns its own rng stream for graph sampling.
class Env {
 public:
  Env(const World& world, double budget, const EnvConfig& cfg, std::uint64_t seed)
      : world_(&world), cfg_(cfg), belief_(world, budget), gp_(cfg.gp, cfg.gp_capacity), rng_(seed) {
    for (const auto& s : start_mission(belief_, world, cfg_.mission)) gp_.add_sample(s.pose, s.utility);
    done_ = mission_over(belief_, cfg_.mission);
  }

  const World& world() const { return *world_; }
  const EnvConfig& config() const { return cfg_; }
  const BeliefState& belief() const { return belief_; }
  const GPModel& gp() const { return gp_; }
  bool done() const { return done_; }
  double pct_targets() const {
    return world_->n_targets > 0 ? 100.0 * belief_.n_discovered() / world_->n_targets : 0.0;
  }

  // Graph for the next decision, sampled once per step.
  const DynGraph& graph() {
    if (!graph_) graph_ = build_graph(belief_, belief_.current, gp_, cfg_.graph, rng_);
    return *graph_;
  }

  nn::PolicyInput policy_input() { return nn::make_input(graph(), belief_.budget_remaining, cfg_.reward.ucb_threshold); }

  // Moves to graph node `index`, fuses the observations and scores the step.
  StepResult step(int index) {
    const DynGraph& g = graph();
    StepResult out;
    out.action = g.nodes.at(static_cast<std::size_t>(index));

    const auto interest = interest_set(g);
    const double tr_before = gp_.posterior_diag(interest).var.sum();
    const auto tr = step_transition(belief_, *world_, belief_.current, out.action, cfg_.mission);
    for (const auto& s : tr.observations) gp_.add_sample(s.pose, s.utility);

    auto& r = out.reward;
    if (tr_before <= 1e-12) {
      r.degenerate = true;
    } else {
      r.exploration = (tr_before - gp_.posterior_diag(interest).var.sum()) / tr_before;
    }
    r.information = information_reward(tr.new_target_count);
    r.total = total_reward(cfg_.reward, r.exploration, r.information);

    out.cost = tr.cost;
    out.new_targets = tr.new_target_count;
    graph_.reset();
    done_ = tr.terminal;
    out.done = done_;
    return out;
  }

  void finish() { done_ = true; }

 private:
  std::vector<Action> interest_set(const DynGraph& g) const {
    const auto sel = ucb_filter(g.nodes, gp_, cfg_.reward.ucb_beta, cfg_.reward.ucb_threshold);
    std::vector<Action> a;
    a.reserve(sel.indices.size());
    for (int i : sel.indices) a.push_back(g.nodes[static_cast<std::size_t>(i)]);
    return a;
  }

  const World* world_;
  EnvConfig cfg_;
  BeliefState belief_;
  GPModel gp_;
  Rng rng_;
  std::optional<DynGraph> graph_;
  bool done_ = false;
};

}  // namespace ipp3d
