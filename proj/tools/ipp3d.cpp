// Command-line front end: gen-worlds, train, eval, inspect-world.
#include "ipp3d/config.hpp"
#include "ipp3d/errors.hpp"
#include "ipp3d/evaluation.hpp"
#include "ipp3d/train.hpp"
#include "ipp3d/world.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ipp3d;

namespace {

enum Exit { kOk = 0, kConfig = 2, kIo = 3, kRuntime = 4 };

struct Common {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  int jobs = 1;
};

void add_common(CLI::App* app, Common& c, bool with_out = true) {
  app->add_option("--config", c.config, "YAML config file (defaults apply when omitted)");
  app->add_option("--set", c.overrides, "Override a config key, e.g. --set train.lr=3e-4")->take_all();
  app->add_option("--seed", c.seed, "Seed override");
  if (with_out) app->add_option("--out", c.out, "Output directory")->required();
  app->add_option("--jobs", c.jobs, "Worker thread cap (0 = all cores)")->check(CLI::NonNegativeNumber);
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : load_config(c.config);
  for (const auto& o : c.overrides) apply_override(cfg, o);
  validate(cfg);
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

int cmd_gen_worlds(const Common& c, std::optional<int> count) {
  RunConfig cfg = resolve(c);
  if (c.seed) cfg.eval.world_seed = *c.seed;
  if (count) cfg.eval.worlds = *count;
  fs::create_directories(c.out);
  for (int i = 0; i < cfg.eval.worlds; ++i) {
    const auto w = generate_world(cfg.eval_world(), cfg.eval.world_seed + static_cast<std::uint64_t>(i));
    save_world(w, (fs::path(c.out) / world_file_name(i)).string());
  }
  std::cout << "wrote " << cfg.eval.worlds << " worlds to " << c.out << "\n";
  return kOk;
}

int cmd_train(const Common& c, bool resume) {
  RunConfig cfg = resolve(c);
  if (c.seed) cfg.seed = *c.seed;
  fs::create_directories(c.out);
  write_text(fs::path(c.out) / "config.yaml", to_yaml(cfg));
  TrainOptions opts;
  opts.jobs = c.jobs;
  opts.resume = resume;
  opts.on_iteration = [](const TrainLogRow& r) {
    std::printf("iter %5ld  interactions %7ld  return %8.4f  targets %6.2f%%  kl %.4g\n", r.iteration, r.interactions,
                r.mean_return, r.mean_pct_targets, r.stats.approx_kl);
    std::fflush(stdout);
  };
  const auto s = train(cfg, c.out, opts);
  std::cout << "done: " << s.iteration << " iterations, " << s.interactions << " interactions; policy at "
            << (fs::path(c.out) / "policy.bin").string() << "\n";
  return kOk;
}

int cmd_eval(const Common& c, const std::string& planner, const std::string& checkpoint, const std::string& worlds_dir,
             std::string run_id) {
  RunConfig cfg = resolve(c);
  if (c.seed) cfg.eval.seed = *c.seed;
  if (run_id.empty()) run_id = planner + "-" + std::to_string(cfg.eval.seed);
  const auto run = run_eval(cfg, planner, checkpoint, c.out, run_id, worlds_dir, c.jobs);
  const auto& s = run.summary;
  std::printf("%-8s %16s %10s %20s %9s\n", "planner", "mean_pct_targets", "std", "mean_replan_time_ms", "episodes");
  std::printf("%-8s %16.2f %10.2f %20.3f %9d\n", s.planner.c_str(), s.mean_pct_targets, s.std_pct_targets,
              s.mean_replan_time_ms, s.episodes);
  if (s.abnormal > 0) std::printf("warning: %d episodes ended abnormally\n", s.abnormal);
  return kOk;
}

int cmd_inspect(const Common& c, const std::string& path) {
  const RunConfig cfg = resolve(c);
  World w;
  if (!path.empty()) w = load_world(path, cfg.world.resolution);
  else if (c.seed) w = generate_world(cfg.eval_world(), *c.seed);
  else throw ConfigError("inspect-world needs a world file or --seed");
  long occupied = 0;
  for (auto v : w.grid.cells()) occupied += v == Terrain::tree ? 1 : 0;
  int outside = 0;
  for (const auto& t : w.targets) {
    bool inside = false;
    for (const auto& tree : w.trees) inside = inside || tree.in_canopy(t, 1e-9);  // fruit sit on the surface
    outside += inside ? 0 : 1;
  }
  std::printf("seed        %llu\nmode        %s\ntrees       %zu\ntargets     %d\noccupied    %ld of %zu voxels\n",
              static_cast<unsigned long long>(w.seed), std::string(to_string(w.mode)).c_str(), w.trees.size(),
              w.n_targets, occupied, w.grid.cells().size());
  std::printf("targets outside every canopy: %d\n", outside);
  for (std::size_t i = 0; i < w.trees.size(); ++i) {
    const auto& t = w.trees[i];
    std::printf("  tree %2zu  base (%.3f, %.3f)  trunk r=%.3f h=%.3f  canopy (%.3f, %.3f, %.3f)\n", i, t.base.x(),
                t.base.y(), t.trunk_radius, t.trunk_height, t.canopy_axes.x(), t.canopy_axes.y(), t.canopy_axes.z());
  }
  return outside == 0 ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D informative path planning: world generation, policy training and evaluation"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, inspect_c;
  std::optional<int> gen_count;
  auto* gen = app.add_subcommand("gen-worlds", "Write evaluation worlds as JSON files");
  add_common(gen, gen_c);
  gen->add_option("--worlds", gen_count, "Number of worlds (default eval.worlds)")->check(CLI::NonNegativeNumber);

  bool resume = false;
  auto* tr = app.add_subcommand("train", "Train the attention policy with PPO");
  add_common(tr, train_c);
  tr->add_flag("--resume", resume, "Continue from the latest checkpoint in --out");

  std::string planner = "random", checkpoint, worlds_dir, run_id;
  auto* ev = app.add_subcommand("eval", "Run the evaluation protocol for one planner");
  add_common(ev, eval_c);
  ev->add_option("--planner", planner, "random, greedy or policy");
  ev->add_option("--checkpoint", checkpoint, "Parameter file (policy.bin or checkpoints/ckpt_*.bin)");
  ev->add_option("--worlds", worlds_dir, "Directory of world files (generated from the config when omitted)");
  ev->add_option("--run-id", run_id, "run_id column value (default <planner>-<seed>)");

  std::string world_path;
  auto* in = app.add_subcommand("inspect-world", "Summarize a world file, or the world generated from --seed");
  add_common(in, inspect_c, false);
  in->add_option("world", world_path, "World JSON file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) return cmd_gen_worlds(gen_c, gen_count);
    if (*tr) return cmd_train(train_c, resume);
    if (*ev) return cmd_eval(eval_c, planner, checkpoint, worlds_dir, run_id);
    if (*in) return cmd_inspect(inspect_c, world_path);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kRuntime;
}
