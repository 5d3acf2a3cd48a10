#pragma once

#include "ipp3d/config.hpp"
#include "ipp3d/errors.hpp"
#include "ipp3d/nn/adam.hpp"
#include "ipp3d/nn/checkpoint.hpp"
#include "ipp3d/nn/policy.hpp"
#include "ipp3d/ppo.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

namespace ipp3d {

namespace fs = std::filesystem;

inline const char* kTrainLogHeader =
    "interactions,iteration,mean_return,mean_pct_targets,policy_loss,value_loss,entropy,approx_kl,clip_frac,lr";

struct TrainLogRow {
  long interactions = 0;
  long iteration = 0;
  double mean_return = 0.0;
  double mean_pct_targets = 0.0;
  UpdateStats stats;

  std::string csv() const {
    std::ostringstream s;
    s << std::setprecision(10) << interactions << ',' << iteration << ',' << mean_return << ',' << mean_pct_targets
      << ',' << stats.policy_loss << ',' << stats.value_loss << ',' << stats.entropy << ',' << stats.approx_kl << ','
      << stats.clip_frac << ',' << stats.lr;
    return s.str();
  }
};

struct TrainState {
  nn::PolicyParams<double> params;
  nn::Adam<double> opt;
  long iteration = 0;      // completed iterations
  long interactions = 0;   // environment steps consumed
};

inline TrainState initial_state(const RunConfig& cfg) {
  TrainState s;
  s.params = nn::PolicyParams<double>::init(cfg.policy, derive_seed(cfg.seed, 0x1417));
  s.opt = nn::Adam<double>(s.params, cfg.adam());
  return s;
}

// Files for the checkpoint taken after `iteration` completed iterations.
struct CheckpointPaths {
  fs::path params, optimizer, sidecar;
};

inline CheckpointPaths checkpoint_paths(const fs::path& out_dir, long iteration) {
  std::ostringstream stem;
  stem << "ckpt_" << std::setw(6) << std::setfill('0') << iteration;
  const fs::path base = out_dir / "checkpoints" / stem.str();
  return {base.string() + ".bin", base.string() + ".adam.bin", base.string() + ".json"};
}

inline void save_checkpoint(const fs::path& out_dir, const RunConfig& cfg, const TrainState& s) {
  const auto p = checkpoint_paths(out_dir, s.iteration);
  fs::create_directories(p.params.parent_path());
  nn::save_params(s.params, p.params.string());
  nn::save_tensors(s.opt.state(s.params), p.optimizer.string());
  nlohmann::json side{{"iteration", s.iteration},
                      {"interactions", s.interactions},
                      {"optimizer_steps", s.opt.steps()},
                      {"params", p.params.filename().string()},
                      {"optimizer", p.optimizer.filename().string()},
                      // Every random stream of iteration k is derived from (seed, k), so
                      // the seed and the next iteration fully determine the rng state.
                      {"rng", {{"seed", cfg.seed}, {"next_iteration", s.iteration}}},
                      {"config", to_yaml(cfg)}};
  std::ofstream(p.sidecar) << side.dump(2) << "\n";
  std::ofstream(out_dir / "latest.json") << nlohmann::json{{"sidecar", p.sidecar.filename().string()}}.dump() << "\n";
  fs::copy_file(p.params, out_dir / "policy.bin", fs::copy_options::overwrite_existing);
}

inline TrainState load_checkpoint(const fs::path& out_dir, const RunConfig& cfg) {
  const auto latest = out_dir / "latest.json";
  if (!fs::exists(latest)) throw IoError("no checkpoint to resume in " + out_dir.string());
  nlohmann::json side;
  try {
    std::ifstream in(latest);
    const auto name = nlohmann::json::parse(in).at("sidecar").get<std::string>();
    std::ifstream sin(out_dir / "checkpoints" / name);
    side = nlohmann::json::parse(sin);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad checkpoint sidecar: ") + e.what());
  }
  TrainState s;
  const fs::path dir = out_dir / "checkpoints";
  s.params = nn::load_params<double>((dir / side.at("params").get<std::string>()).string(), cfg.policy);
  s.opt = nn::Adam<double>(s.params, cfg.adam());
  s.opt.restore(nn::load_tensors<double>((dir / side.at("optimizer").get<std::string>()).string()),
                side.at("optimizer_steps").get<long>());
  s.iteration = side.at("iteration").get<long>();
  s.interactions = side.at("interactions").get<long>();
  return s;
}

struct TrainOptions {
  int jobs = 1;
  bool resume = false;
  std::function<void(const TrainLogRow&)> on_iteration;
};

// Alternates rollout collection and clipped-surrogate updates until
// total_interactions environment steps have been consumed. Writes
// train_log.csv, checkpoints/ and policy.bin (latest parameters) to out_dir.
inline TrainState train(const RunConfig& cfg, const fs::path& out_dir, const TrainOptions& opts = {}) {
  fs::create_directories(out_dir);
  const fs::path log_path = out_dir / "train_log.csv";
  TrainState s;
  std::vector<std::string> kept;
  if (opts.resume) {
    s = load_checkpoint(out_dir, cfg);
    // Drop log rows newer than the checkpoint; they will be regenerated.
    std::ifstream in(log_path);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto comma = line.find(',');
      if (comma == std::string::npos) continue;
      if (std::stol(line.substr(comma + 1)) <= s.iteration) kept.push_back(line);
    }
  } else {
    s = initial_state(cfg);
    save_checkpoint(out_dir, cfg, s);
  }
  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  log << kTrainLogHeader << "\n";
  for (const auto& l : kept) log << l << "\n";
  log.flush();

  const auto env_cfg = cfg.env();
  const auto world_cfg = cfg.train_world();
  while (s.interactions < cfg.train.total_interactions) {
    const auto buf = collect_rollouts(s.params, cfg.train, env_cfg, world_cfg, cfg.seed, s.iteration, opts.jobs);
    const auto adv = advantages(buf, cfg.train.gamma, cfg.train.lambda);
    Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(s.iteration), 0x5eed));
    TrainLogRow row;
    row.stats = ppo_update(s.params, s.opt, buf, adv, cfg.train, rng);
    s.iteration += 1;
    s.interactions += static_cast<long>(buf.size());
    row.iteration = s.iteration;
    row.interactions = s.interactions;
    for (const auto& e : buf.episodes) {
      row.mean_return += e.ret;
      row.mean_pct_targets += e.pct_targets;
    }
    row.mean_return /= static_cast<double>(buf.episodes.size());
    row.mean_pct_targets /= static_cast<double>(buf.episodes.size());
    log << row.csv() << "\n";
    log.flush();
    if (opts.on_iteration) opts.on_iteration(row);
    if (s.iteration % cfg.train.checkpoint_every == 0 || s.interactions >= cfg.train.total_interactions) {
      save_checkpoint(out_dir, cfg, s);
    }
  }
  return s;
}

}  // namespace ipp3d
