#pragma once

#include "ipp3d/config.hpp"
#include "ipp3d/errors.hpp"
#include "ipp3d/nn/checkpoint.hpp"
#include "ipp3d/parallel.hpp"
#include "ipp3d/planners.hpp"
#include "ipp3d/world.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace ipp3d {

inline std::string world_file_name(int index) {
  std::ostringstream s;
  s << "world_" << std::setw(3) << std::setfill('0') << index << ".json";
  return s.str();
}

// World i of the protocol uses seed eval.world_seed + i.
inline std::vector<World> generate_eval_worlds(const RunConfig& cfg) {
  std::vector<World> worlds;
  for (int i = 0; i < cfg.eval.worlds; ++i) worlds.push_back(generate_world(cfg.eval_world(), cfg.eval.world_seed + i));
  return worlds;
}

inline std::vector<World> load_worlds(const std::filesystem::path& dir, int resolution) {
  if (!std::filesystem::is_directory(dir)) throw IoError("world directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<World> worlds;
  for (const auto& f : files) worlds.push_back(load_world(f.string(), resolution));
  return worlds;
}

struct EpisodeRecord {
  std::uint64_t world_seed = 0;
  int trial = 0;
  EpisodeLog log;
};

using PlannerFactory = std::function<std::unique_ptr<Planner>()>;

// Every (world, trial) pair runs one episode; trials differ only in the
// episode seed derived from (eval.seed, world index, trial).
inline std::vector<EpisodeRecord> evaluate(const PlannerFactory& make_planner, const std::vector<World>& worlds,
                                           const RunConfig& cfg, int jobs = 1) {
  const int trials = cfg.eval.trials;
  const int n = static_cast<int>(worlds.size()) * trials;
  std::vector<EpisodeRecord> out(static_cast<std::size_t>(n));
  const auto env_cfg = cfg.env();
  parallel_for(n, jobs, [&](int k) {
    const int w = k / trials, t = k % trials;
    auto planner = make_planner();
    auto& rec = out[static_cast<std::size_t>(k)];
    rec.world_seed = worlds[static_cast<std::size_t>(w)].seed;
    rec.trial = t;
    rec.log = run_episode(*planner, worlds[static_cast<std::size_t>(w)], cfg.eval.budget, env_cfg,
                          derive_seed(cfg.eval.seed, static_cast<std::uint64_t>(w), static_cast<std::uint64_t>(t)));
    if (!cfg.eval.record_timing) {
      for (auto& s : rec.log.steps) s.replan_ms = 0.0;
      rec.log.wall_ms = 0.0;
    }
  });
  return out;
}

struct EvalSummary {
  std::string planner;
  double mean_pct_targets = 0.0;
  double std_pct_targets = 0.0;  // population standard deviation over episodes
  double mean_replan_time_ms = 0.0;  // pooled over all planning steps
  int episodes = 0;
  int abnormal = 0;
};

inline EvalSummary summarize(const std::string& planner, const std::vector<EpisodeRecord>& recs) {
  EvalSummary s;
  s.planner = planner;
  s.episodes = static_cast<int>(recs.size());
  if (recs.empty()) return s;
  long steps = 0;
  for (const auto& r : recs) {
    s.mean_pct_targets += r.log.pct_targets;
    for (const auto& st : r.log.steps) s.mean_replan_time_ms += st.replan_ms;
    steps += static_cast<long>(r.log.steps.size());
    s.abnormal += r.log.abnormal ? 1 : 0;
  }
  s.mean_pct_targets /= static_cast<double>(recs.size());
  if (steps > 0) s.mean_replan_time_ms /= static_cast<double>(steps);
  for (const auto& r : recs) s.std_pct_targets += std::pow(r.log.pct_targets - s.mean_pct_targets, 2);
  s.std_pct_targets = std::sqrt(s.std_pct_targets / static_cast<double>(recs.size()));
  return s;
}

// One row per step, plus a step-0 row holding the state after the start sweep.
inline void write_steps_csv(std::ostream& out, const std::string& run_id, const std::string& planner,
                            const std::vector<EpisodeRecord>& recs) {
  out << "run_id,planner,world_seed,trial,step,budget_used,pct_targets,replan_time_ms\n";
  out << std::setprecision(10);
  for (const auto& r : recs) {
    out << run_id << ',' << planner << ',' << r.world_seed << ',' << r.trial << ",0,0," << r.log.start_pct << ",0\n";
    for (std::size_t i = 0; i < r.log.steps.size(); ++i) {
      const auto& s = r.log.steps[i];
      out << run_id << ',' << planner << ',' << r.world_seed << ',' << r.trial << ',' << i + 1 << ',' << s.budget_used
          << ',' << s.pct_targets << ',' << s.replan_ms << '\n';
    }
  }
}

inline void write_summary_csv(std::ostream& out, const std::vector<EvalSummary>& rows) {
  out << "planner,mean_pct_targets,std,mean_replan_time\n" << std::setprecision(10);
  for (const auto& s : rows)
    out << s.planner << ',' << s.mean_pct_targets << ',' << s.std_pct_targets << ',' << s.mean_replan_time_ms << '\n';
}

// Resolves a planner name; `checkpoint` is required for "policy".
inline PlannerFactory planner_factory(const std::string& name, const RunConfig& cfg,
                                      const std::string& checkpoint = "") {
  if (name == "random") return [] { return std::make_unique<RandomPlanner>(); };
  if (name == "greedy") {
    const double beta = cfg.reward.ucb_beta;
    return [beta] { return std::make_unique<GreedyUcbPlanner>(beta); };
  }
  if (name == "policy") {
    if (checkpoint.empty()) throw ConfigError("planner 'policy' needs --checkpoint");
    if (!std::filesystem::exists(checkpoint)) throw IoError("checkpoint not found: " + checkpoint);
    auto params = std::make_shared<const nn::PolicyParams<double>>(nn::load_params<double>(checkpoint, cfg.policy));
    return [params] { return std::make_unique<PolicyPlanner<double>>(params); };
  }
  throw ConfigError("unknown planner '" + name + "' (expected random, greedy or policy)");
}

struct EvalRun {
  std::vector<EpisodeRecord> records;
  EvalSummary summary;
};

// Runs the protocol and writes <out>/steps.csv and <out>/summary.csv.
// Worlds come from `worlds_dir` when given, else they are generated.
inline EvalRun run_eval(const RunConfig& cfg, const std::string& planner, const std::string& checkpoint,
                        const std::filesystem::path& out, const std::string& run_id,
                        const std::string& worlds_dir = "", int jobs = 1) {
  const auto factory = planner_factory(planner, cfg, checkpoint);
  const auto worlds = worlds_dir.empty() ? generate_eval_worlds(cfg) : load_worlds(worlds_dir, cfg.world.resolution);
  EvalRun run;
  run.records = evaluate(factory, worlds, cfg, jobs);
  run.summary = summarize(planner, run.records);
  std::filesystem::create_directories(out);
  std::ofstream steps(out / "steps.csv"), summary(out / "summary.csv");
  if (!steps || !summary) throw IoError("cannot write CSVs to " + out.string());
  write_steps_csv(steps, run_id, planner, run.records);
  write_summary_csv(summary, {run.summary});
  return run;
}

}  // namespace ipp3d
