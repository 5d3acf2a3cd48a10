#pragma once

#include "ipp3d/env.hpp"
#include "ipp3d/errors.hpp"
#include "ipp3d/nn/adam.hpp"
#include "ipp3d/nn/policy.hpp"
#include "ipp3d/ppo.hpp"
#include "ipp3d/world.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

namespace ipp3d {

struct EvalConfig {
  int worlds = 25;
  int trials = 20;
  double budget = 10.0;
  LayoutMode world_mode = LayoutMode::random;
  std::uint64_t world_seed = 100;  // world i uses world_seed + i
  std::uint64_t seed = 7;          // planner/graph streams
  bool record_timing = true;       // false writes 0 for replan_time_ms
};

struct RunConfig {
  std::uint64_t seed = 1;
  WorldGenConfig world;  // mode is set per use: train_mode for training, eval.world_mode for evaluation
  LayoutMode train_mode = LayoutMode::grid;
  SensorConfig sensor;
  double observation_interval = 0.2;
  double yaw_change_cost = 0.1;
  int max_steps = 256;
  Action start{Eigen::Vector3d::Zero(), Yaw{1}};
  GPHyper gp;
  std::size_t gp_capacity = 1024;
  GraphConfig graph;
  RewardConfig reward;
  nn::PolicyConfig policy;
  TrainConfig train;
  EvalConfig eval;

  EnvConfig env() const {
    EnvConfig e;
    e.mission.sensor = sensor;
    e.mission.observation_interval = observation_interval;
    e.mission.yaw_change_cost = yaw_change_cost;
    e.mission.max_steps = max_steps;
    e.mission.start = start;
    e.gp = gp;
    e.gp_capacity = gp_capacity;
    e.graph = graph;
    e.graph.yaw_change_cost = yaw_change_cost;
    e.reward = reward;
    return e;
  }

  WorldGenConfig train_world() const {
    auto w = world;
    w.mode = train_mode;
    return w;
  }

  WorldGenConfig eval_world() const {
    auto w = world;
    w.mode = eval.world_mode;
    return w;
  }

  nn::AdamConfig adam() const {
    nn::AdamConfig a;
    a.lr = train.lr;
    a.decay = train.lr_decay;
    a.decay_every = train.lr_decay_every;
    a.max_grad_norm = train.max_grad_norm;
    return a;
  }
};

namespace detail {

// One dotted config key bound to a RunConfig member.
struct ConfigField {
  std::string key;
  std::function<void(RunConfig&, const YAML::Node&)> set;
  std::function<YAML::Node(const RunConfig&)> get;
};

template <typename V>
V parse_scalar(const YAML::Node& n, const std::string& key) {
  try {
    return n.as<V>();
  } catch (const YAML::Exception&) {
    throw ConfigError("invalid value for '" + key + "'");
  }
}

template <typename V, typename Ref>
ConfigField field(std::string key, Ref ref) {
  return {key,
          [ref, key](RunConfig& c, const YAML::Node& n) { ref(c) = parse_scalar<V>(n, key); },
          [ref](const RunConfig& c) { return YAML::Node(ref(const_cast<RunConfig&>(c))); }};
}

inline double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
inline double rad(double deg) { return deg * std::numbers::pi / 180.0; }

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
#define IPP3D_FIELD(type, key, expr) f.push_back(field<type>(key, [](RunConfig& c) -> auto& { return expr; }))
    IPP3D_FIELD(std::uint64_t, "seed", c.seed);

    IPP3D_FIELD(int, "world.grid_side", c.world.grid_side);
    IPP3D_FIELD(int, "world.random_tree_count", c.world.random_tree_count);
    IPP3D_FIELD(double, "world.trunk_radius", c.world.trunk_radius);
    IPP3D_FIELD(double, "world.trunk_height", c.world.trunk_height);
    f.push_back({"world.canopy_axes",
                 [](RunConfig& c, const YAML::Node& n) {
                   const auto v = parse_scalar<std::vector<double>>(n, "world.canopy_axes");
                   if (v.size() != 3) throw ConfigError("world.canopy_axes needs 3 values");
                   c.world.canopy_axes = {v[0], v[1], v[2]};
                 },
                 [](const RunConfig& c) {
                   YAML::Node n;
                   for (int i = 0; i < 3; ++i) n.push_back(c.world.canopy_axes[i]);
                   n.SetStyle(YAML::EmitterStyle::Flow);
                   return n;
                 }});
    IPP3D_FIELD(double, "world.tree_clearance", c.world.tree_clearance);
    IPP3D_FIELD(int, "world.min_targets", c.world.min_targets);
    IPP3D_FIELD(int, "world.max_targets", c.world.max_targets);
    IPP3D_FIELD(double, "world.fruit_shell", c.world.fruit_shell);
    IPP3D_FIELD(int, "world.placement_attempts", c.world.placement_attempts);
    IPP3D_FIELD(int, "world.layout_restarts", c.world.layout_restarts);
    IPP3D_FIELD(int, "world.resolution", c.world.resolution);

    IPP3D_FIELD(double, "sensor.range", c.sensor.range);
    f.push_back({"sensor.fov_horizontal_deg",
                 [](RunConfig& c, const YAML::Node& n) { c.sensor.fov_horizontal = rad(parse_scalar<double>(n, "sensor.fov_horizontal_deg")); },
                 [](const RunConfig& c) { return YAML::Node(deg(c.sensor.fov_horizontal)); }});
    f.push_back({"sensor.fov_vertical_deg",
                 [](RunConfig& c, const YAML::Node& n) { c.sensor.fov_vertical = rad(parse_scalar<double>(n, "sensor.fov_vertical_deg")); },
                 [](const RunConfig& c) { return YAML::Node(deg(c.sensor.fov_vertical)); }});

    IPP3D_FIELD(double, "mission.observation_interval", c.observation_interval);
    IPP3D_FIELD(double, "mission.yaw_change_cost", c.yaw_change_cost);
    IPP3D_FIELD(int, "mission.max_steps", c.max_steps);
    f.push_back({"mission.start",
                 [](RunConfig& c, const YAML::Node& n) {
                   const auto v = parse_scalar<std::vector<double>>(n, "mission.start");
                   if (v.size() != 4) throw ConfigError("mission.start needs [x, y, z, yaw_index]");
                   const int yaw = static_cast<int>(v[3]);
                   if (yaw != v[3] || yaw < 0 || yaw >= kNumYaws) throw ConfigError("mission.start yaw_index must be 0..3");
                   c.start = {Eigen::Vector3d(v[0], v[1], v[2]), Yaw{yaw}};
                 },
                 [](const RunConfig& c) {
                   YAML::Node n;
                   for (int i = 0; i < 3; ++i) n.push_back(c.start.pos[i]);
                   n.push_back(c.start.yaw.index);
                   n.SetStyle(YAML::EmitterStyle::Flow);
                   return n;
                 }});

    IPP3D_FIELD(double, "gp.length_scale", c.gp.length_scale);
    IPP3D_FIELD(double, "gp.signal_variance", c.gp.signal_variance);
    IPP3D_FIELD(double, "gp.noise_variance", c.gp.noise_variance);
    IPP3D_FIELD(double, "gp.yaw_weight", c.gp.yaw_weight);
    f.push_back({"gp.yaw_metric",
                 [](RunConfig& c, const YAML::Node& n) {
                   const auto s = parse_scalar<std::string>(n, "gp.yaw_metric");
                   if (s == "chordal") c.gp.yaw_metric = YawMetric::chordal;
                   else if (s == "geodesic") c.gp.yaw_metric = YawMetric::geodesic;
                   else throw ConfigError("gp.yaw_metric must be chordal or geodesic");
                 },
                 [](const RunConfig& c) {
                   return YAML::Node(c.gp.yaw_metric == YawMetric::chordal ? "chordal" : "geodesic");
                 }});
    IPP3D_FIELD(std::size_t, "gp.capacity", c.gp_capacity);

    IPP3D_FIELD(int, "graph.positions", c.graph.positions);
    IPP3D_FIELD(double, "graph.neighbourhood", c.graph.neighbourhood);
    IPP3D_FIELD(int, "graph.draws_per_position", c.graph.draws_per_position);
    IPP3D_FIELD(int, "graph.max_halvings", c.graph.max_halvings);

    IPP3D_FIELD(double, "reward.exploration_weight", c.reward.exploration_weight);
    IPP3D_FIELD(double, "reward.information_weight", c.reward.information_weight);
    IPP3D_FIELD(double, "reward.ucb_beta", c.reward.ucb_beta);
    IPP3D_FIELD(double, "reward.ucb_threshold", c.reward.ucb_threshold);

    IPP3D_FIELD(int, "policy.hidden", c.policy.hidden);
    IPP3D_FIELD(int, "policy.heads", c.policy.heads);
    IPP3D_FIELD(int, "policy.encoder_layers", c.policy.encoder_layers);
    IPP3D_FIELD(int, "policy.ff_width", c.policy.ff_width);
    IPP3D_FIELD(double, "policy.logit_clip", c.policy.logit_clip);
    IPP3D_FIELD(double, "policy.budget_scale", c.policy.budget_scale);

    f.push_back({"train.world_mode",
                 [](RunConfig& c, const YAML::Node& n) { c.train_mode = layout_from_string(parse_scalar<std::string>(n, "train.world_mode")); },
                 [](const RunConfig& c) { return YAML::Node(std::string(to_string(c.train_mode))); }});
    IPP3D_FIELD(int, "train.n_envs", c.train.n_envs);
    IPP3D_FIELD(int, "train.epochs", c.train.epochs);
    IPP3D_FIELD(int, "train.batch", c.train.batch);
    IPP3D_FIELD(double, "train.lr", c.train.lr);
    IPP3D_FIELD(double, "train.lr_decay", c.train.lr_decay);
    IPP3D_FIELD(int, "train.lr_decay_every", c.train.lr_decay_every);
    IPP3D_FIELD(double, "train.clip", c.train.clip);
    IPP3D_FIELD(double, "train.gamma", c.train.gamma);
    IPP3D_FIELD(double, "train.lambda", c.train.lambda);
    IPP3D_FIELD(double, "train.value_coef", c.train.value_coef);
    IPP3D_FIELD(double, "train.entropy_coef", c.train.entropy_coef);
    IPP3D_FIELD(double, "train.max_grad_norm", c.train.max_grad_norm);
    IPP3D_FIELD(double, "train.budget_min", c.train.budget_min);
    IPP3D_FIELD(double, "train.budget_max", c.train.budget_max);
    IPP3D_FIELD(long, "train.total_interactions", c.train.total_interactions);
    IPP3D_FIELD(int, "train.checkpoint_every", c.train.checkpoint_every);

    IPP3D_FIELD(int, "eval.worlds", c.eval.worlds);
    IPP3D_FIELD(int, "eval.trials", c.eval.trials);
    IPP3D_FIELD(double, "eval.budget", c.eval.budget);
    f.push_back({"eval.world_mode",
                 [](RunConfig& c, const YAML::Node& n) { c.eval.world_mode = layout_from_string(parse_scalar<std::string>(n, "eval.world_mode")); },
                 [](const RunConfig& c) { return YAML::Node(std::string(to_string(c.eval.world_mode))); }});
    IPP3D_FIELD(std::uint64_t, "eval.world_seed", c.eval.world_seed);
    IPP3D_FIELD(std::uint64_t, "eval.seed", c.eval.seed);
    IPP3D_FIELD(bool, "eval.record_timing", c.eval.record_timing);
#undef IPP3D_FIELD
    return f;
  }();
  return fields;
}

inline const ConfigField* find_field(const std::string& key) {
  for (const auto& f : config_fields())
    if (f.key == key) return &f;
  return nullptr;
}

inline void apply_node(RunConfig& c, const YAML::Node& node, const std::string& prefix) {
  if (!node.IsMap()) throw ConfigError("expected a mapping at '" + (prefix.empty() ? std::string("<root>") : prefix) + "'");
  for (const auto& kv : node) {
    const std::string key = prefix.empty() ? kv.first.as<std::string>() : prefix + "." + kv.first.as<std::string>();
    if (const auto* f = find_field(key)) {
      f->set(c, kv.second);
    } else if (kv.second.IsMap()) {
      apply_node(c, kv.second, key);
    } else {
      throw ConfigError("unknown config key '" + key + "'");
    }
  }
}

}  // namespace detail

inline void validate(const RunConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(c.world.resolution > 0, "world.resolution must be positive");
  require(c.world.trunk_radius > 0, "world.trunk_radius must be positive");
  require((c.world.canopy_axes.array() > 0).all(), "world.canopy_axes must be positive");
  require(c.world.min_targets >= 0 && c.world.max_targets >= c.world.min_targets, "world target range is invalid");
  require(c.world.fruit_shell >= 0 && c.world.fruit_shell <= 1, "world.fruit_shell must be in [0, 1]");
  require(c.sensor.range > 0, "sensor.range must be positive");
  require(c.sensor.fov_horizontal > 0 && c.sensor.fov_horizontal < std::numbers::pi, "sensor.fov_horizontal_deg must be in (0, 180)");
  require(c.sensor.fov_vertical > 0 && c.sensor.fov_vertical < std::numbers::pi, "sensor.fov_vertical_deg must be in (0, 180)");
  require(c.observation_interval > 0, "mission.observation_interval must be positive");
  require(c.yaw_change_cost >= 0, "mission.yaw_change_cost must be non-negative");
  require(c.max_steps > 0, "mission.max_steps must be positive");
  require(in_bounds(c.start.pos), "mission.start must lie in the unit cube");
  require(c.gp.length_scale > 0 && c.gp.signal_variance > 0, "gp.length_scale and gp.signal_variance must be positive");
  require(c.gp.noise_variance >= 0 && c.gp.yaw_weight >= 0, "gp.noise_variance and gp.yaw_weight must be non-negative");
  require(c.gp_capacity > 0, "gp.capacity must be positive");
  require(c.graph.positions >= 1, "graph.positions must be at least 1");
  require(c.graph.neighbourhood > 0, "graph.neighbourhood must be positive");
  require(c.graph.draws_per_position > 0 && c.graph.max_halvings >= 0, "graph sampling limits are invalid");
  require(c.reward.exploration_weight >= 0 && c.reward.information_weight >= 0, "reward weights must be non-negative");
  require(c.policy.hidden > 0 && c.policy.heads > 0 && c.policy.hidden % c.policy.heads == 0,
          "policy.hidden must be a positive multiple of policy.heads");
  require(c.policy.encoder_layers >= 0 && c.policy.ff_width > 0, "policy sizes are invalid");
  require(c.policy.logit_clip > 0 && c.policy.budget_scale > 0, "policy.logit_clip and policy.budget_scale must be positive");
  const auto& t = c.train;
  require(t.n_envs > 0 && t.epochs > 0 && t.batch > 0, "train.n_envs, train.epochs and train.batch must be positive");
  require(t.lr > 0 && t.lr_decay > 0 && t.lr_decay_every > 0, "train learning-rate schedule must be positive");
  require(t.clip > 0 && t.clip < 1, "train.clip must be in (0, 1)");
  require(t.gamma > 0 && t.gamma <= 1 && t.lambda > 0 && t.lambda <= 1, "train.gamma and train.lambda must be in (0, 1]");
  require(t.value_coef > 0 && t.entropy_coef >= 0 && t.max_grad_norm >= 0, "train loss coefficients are invalid");
  require(t.budget_min > 0 && t.budget_max >= t.budget_min, "train budget range is invalid");
  require(t.total_interactions >= 0 && t.checkpoint_every > 0, "train.total_interactions and train.checkpoint_every are invalid");
  require(c.eval.worlds >= 0 && c.eval.trials >= 0 && c.eval.budget > 0, "eval protocol sizes are invalid");
}

// Overrides `key` with a YAML-parsed value, e.g. "train.lr=3e-4".
inline void apply_override(RunConfig& c, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const auto* f = detail::find_field(key);
  if (!f) throw ConfigError("unknown config key '" + key + "'");
  YAML::Node value;
  try {
    value = YAML::Load(assignment.substr(eq + 1));
  } catch (const YAML::Exception& e) {
    throw ConfigError("cannot parse value for '" + key + "': " + e.what());
  }
  f->set(c, value);
}

inline RunConfig config_from_yaml(const std::string& text, const RunConfig& base = {}) {
  RunConfig c = base;
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  if (root.IsDefined() && !root.IsNull()) detail::apply_node(c, root, "");
  validate(c);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_yaml(ss.str());
}

inline std::string to_yaml(const RunConfig& c) {
  YAML::Node root;
  for (const auto& f : detail::config_fields()) {
    const auto dot = f.key.find('.');
    if (dot == std::string::npos) root[f.key] = f.get(c);
    else root[f.key.substr(0, dot)][f.key.substr(dot + 1)] = f.get(c);
  }
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << root;
  return std::string(out.c_str()) + "\n";
}

}  // namespace ipp3d
