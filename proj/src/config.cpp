#include "hwrisk/config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <type_traits>

#include "hwrisk/errors.hpp"

namespace hwrisk {

namespace {

// Single registry of every configurable field, used for loading and dumping.
template <typename F>
void for_each_field(RunConfig& c, F&& f) {
  HighwayConfig& hw = c.env.sim.highway;
  f("highway.length", hw.length);
  f("highway.lane_count", hw.lane_count);
  f("highway.lane_width", hw.lane_width);
  f("highway.speed_limit", hw.speed_limit);
  f("highway.heavy_fraction", hw.heavy_fraction);
  f("highway.arrival_rate", hw.arrival_rate);
  f("highway.warmup", hw.warmup);
  f("highway.initial_speed", hw.initial_speed);
  f("highway.dt", hw.dt);
  f("highway.contain_ego", hw.contain_ego);

  IdmParams& idm = c.env.sim.idm;
  f("idm.a_max", idm.a_max);
  f("idm.b_comf", idm.b_comf);
  f("idm.v0", idm.v0);
  f("idm.s0", idm.s0);
  f("idm.t_headway", idm.t_headway);
  f("idm.delta", idm.delta);

  MobilParams& mobil = c.env.sim.mobil;
  f("mobil.politeness", mobil.politeness);
  f("mobil.threshold", mobil.threshold);
  f("mobil.b_safe", mobil.b_safe);
  f("mobil.duration", mobil.duration);
  f("mobil.cooldown", mobil.cooldown);

  FleetParams& fl = c.env.sim.fleet;
  f("fleet.light_mass_min", fl.light_mass_min);
  f("fleet.light_mass_max", fl.light_mass_max);
  f("fleet.heavy_mass_min", fl.heavy_mass_min);
  f("fleet.heavy_mass_max", fl.heavy_mass_max);
  f("fleet.light_length", fl.light_length);
  f("fleet.light_width", fl.light_width);
  f("fleet.heavy_length", fl.heavy_length);
  f("fleet.heavy_width", fl.heavy_width);
  f("fleet.light_speed_factor_min", fl.light_speed_factor_min);
  f("fleet.light_speed_factor_max", fl.light_speed_factor_max);
  f("fleet.heavy_speed_factor_min", fl.heavy_speed_factor_min);
  f("fleet.heavy_speed_factor_max", fl.heavy_speed_factor_max);
  f("fleet.entry_gap", fl.entry_gap);
  f("fleet.emergency_decel", fl.emergency_decel);

  RiskFieldParams& rk = c.env.risk;
  f("risk.t_light", rk.t_light);
  f("risk.t_heavy", rk.t_heavy);
  f("risk.beta1", rk.beta1);
  f("risk.beta2", rk.beta2);
  f("risk.beta3", rk.beta3);
  f("risk.lambda", rk.lambda_field);
  f("risk.tau", rk.tau);
  f("risk.warp_coeff", rk.warp_coeff);
  f("risk.force_speed_term_uses_ov", rk.force_speed_term_uses_ov);

  RewardConfig& rw = c.env.reward;
  f("reward.w_risk", rw.w_risk);
  f("reward.w_vertical", rw.w_vertical);
  f("reward.w_position", rw.w_position);
  f("reward.w_limit", rw.w_limit);
  f("reward.w_collision", rw.w_collision);
  f("reward.risk_mode", rw.risk_mode);
  f("reward.adr_min", rw.adr_min);
  f("reward.adr_max", rw.adr_max);
  f("reward.speed_min", rw.speed_min);
  f("reward.speed_max", rw.speed_max);
  f("reward.position_min", rw.position_min);
  f("reward.position_max", rw.position_max);
  f("reward.ttc_threshold", rw.ttc_threshold);

  ActionBounds& ab = c.env.bounds;
  f("actions.a_long_max", ab.a_long_max);
  f("actions.a_lat_max", ab.a_lat_max);
  f("actions.a_keep", ab.a_keep);

  EnvConfig& e = c.env;
  f("env.max_steps", e.max_steps);
  f("env.perception_range", e.perception_range);
  f("env.ego_mass", e.ego_mass);
  f("env.insert_x_min", e.insert_x_min);
  f("env.insert_x_max", e.insert_x_max);
  f("env.insert_min_gap", e.insert_min_gap);
  f("env.insert_retries", e.insert_retries);
  f("env.log_radius", e.log_radius);

  TrainerConfig& t = c.trainer;
  f("trainer.gamma", t.gamma);
  f("trainer.gae_lambda", t.gae_lambda);
  f("trainer.clip_eps", t.clip_eps);
  f("trainer.value_clip_eps", t.value_clip_eps);
  f("trainer.value_coeff", t.value_coeff);
  f("trainer.entropy_coeff", t.entropy_coeff);
  f("trainer.minibatch", t.minibatch);
  f("trainer.epochs", t.epochs);
  f("trainer.horizon", t.horizon);
  f("trainer.iterations", t.iterations);
  f("trainer.num_envs", t.num_envs);
  f("trainer.normalize_advantages", t.normalize_advantages);
  f("trainer.bootstrap_truncation", t.bootstrap_truncation);
  f("trainer.log_prob_mode", t.log_prob_mode);
  f("trainer.base_lr", t.base_lr);
  f("trainer.clip_norm", t.clip_norm);
  f("trainer.checkpoint_every", t.checkpoint_every);

  nn::NetworkSpec& n = c.network;
  f("network.dense1", n.dense1);
  f("network.dense2", n.dense2);
  f("network.lstm", n.lstm);
  f("network.dense3", n.dense3);
  f("network.window", n.window);
  f("network.attention", n.attention);
  f("network.head_log_std", n.head_log_std);
  f("network.init_log_std", n.init_log_std);

  f("metrics.ttc", c.thresholds.ttc);
  f("metrics.drac", c.thresholds.drac);
  f("metrics.pet", c.thresholds.pet);

  f("run.eval_episodes", c.eval_episodes);
  f("run.simulate_duration", c.simulate_duration);
  f("run.seed", c.seed);
}

void flatten(const YAML::Node& node, const std::string& prefix,
             std::map<std::string, YAML::Node>& out) {
  if (node.IsNull() && !prefix.empty()) return;  // empty section
  if (!node.IsMap()) {
    if (prefix.empty()) throw ConfigError("top level must be a mapping");
    out[prefix] = node;
    return;
  }
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (kv.second.IsMap()) {
      flatten(kv.second, path, out);
    } else {
      out[path] = kv.second;
    }
  }
}

template <typename T>
void assign(T& field, const YAML::Node& node, const std::string& path) {
  if (!node.IsScalar()) throw ConfigError("'" + path + "' must be a scalar");
  const std::string text = node.Scalar();
  try {
    if constexpr (std::is_same_v<T, RiskMode>) {
      if (text == "adr") {
        field = RiskMode::kAdr;
      } else if (text == "ttc") {
        field = RiskMode::kTtc;
      } else {
        throw ConfigError("'" + path + "' must be adr or ttc");
      }
    } else if constexpr (std::is_same_v<T, LogProbMode>) {
      if (text == "pre_clip") {
        field = LogProbMode::kPreClip;
      } else if (text == "clipped_density") {
        field = LogProbMode::kClippedDensity;
      } else {
        throw ConfigError("'" + path + "' must be pre_clip or clipped_density");
      }
    } else {
      field = node.as<T>();
    }
  } catch (const YAML::Exception&) {
    throw ConfigError("'" + path + "' has invalid value '" + text + "'");
  }
}

std::string scalar_text(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, r.ptr);
  // Keep floats recognisable as floats.
  if (s.find_first_of(".eE") == std::string::npos && s.find("inf") == std::string::npos) s += ".0";
  return s;
}

template <typename T>
std::string scalar_text(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_same_v<T, RiskMode>) {
    return v == RiskMode::kAdr ? "adr" : "ttc";
  } else if constexpr (std::is_same_v<T, LogProbMode>) {
    return v == LogProbMode::kPreClip ? "pre_clip" : "clipped_density";
  } else {
    return std::to_string(v);
  }
}

}  // namespace

void RunConfig::validate() const {
  env.validate();
  trainer.validate();
  if (network.window == 0) throw ConfigError("network.window must be positive");
  if (eval_episodes < 0) throw ConfigError("run.eval_episodes must be non-negative");
  if (!(simulate_duration >= 0.0)) throw ConfigError("run.simulate_duration must be >= 0");
}

RunConfig parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("malformed YAML: ") + e.what());
  }
  std::map<std::string, YAML::Node> flat;
  if (!root.IsNull()) flatten(root, "", flat);
  RunConfig cfg;
  for_each_field(cfg, [&](const char* path, auto& field) {
    const auto it = flat.find(path);
    if (it == flat.end()) return;
    assign(field, it->second, path);
    flat.erase(it);
  });
  if (!flat.empty()) throw ConfigError("unknown key '" + flat.begin()->first + "'");
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

void write_config(std::ostream& out, const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string section;
  for_each_field(copy, [&](const char* path, auto& field) {
    const std::string p = path;
    const std::size_t dot = p.find('.');
    const std::string sec = p.substr(0, dot);
    if (sec != section) {
      out << sec << ":\n";
      section = sec;
    }
    out << "  " << p.substr(dot + 1) << ": " << scalar_text(field) << '\n';
  });
}

std::string config_to_string(const RunConfig& cfg) {
  std::ostringstream os;
  write_config(os, cfg);
  return os.str();
}

}  // namespace hwrisk
