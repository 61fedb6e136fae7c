#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "hwrisk/envmdp.hpp"
#include "hwrisk/hppo.hpp"
#include "hwrisk/network.hpp"
#include "hwrisk/safetymetrics.hpp"

namespace hwrisk {

// Everything a run needs. Every field has a default; a YAML file overrides
// any subset using two-level keys such as `highway.lane_count`.
struct RunConfig {
  EnvConfig env;
  TrainerConfig trainer;
  nn::NetworkSpec network;
  MetricThresholds thresholds;
  int eval_episodes = 20;
  double simulate_duration = 600.0;  // s of ambient traffic for `simulate`
  std::uint64_t seed = 1;

  void validate() const;
  MetricsConfig metrics() const { return metrics_config(env, thresholds); }
};

// Unknown keys throw ConfigError naming the full key path.
RunConfig parse_config(const std::string& yaml_text);
RunConfig load_config(const std::filesystem::path& path);

// Every parameter with its resolved value, as YAML that parse_config accepts.
void write_config(std::ostream& out, const RunConfig& cfg);
std::string config_to_string(const RunConfig& cfg);

}  // namespace hwrisk
