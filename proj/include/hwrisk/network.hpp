#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "hwrisk/autodiff.hpp"
#include "hwrisk/envmdp.hpp"
#include "hwrisk/layers.hpp"

namespace hwrisk::nn {

inline constexpr std::size_t kBranchCount = 3;
inline constexpr std::size_t kContinuousDims = 2;

struct NetworkSpec {
  std::size_t obs_size = kObservationSize;
  std::size_t dense1 = 64;
  std::size_t dense2 = 128;
  std::size_t lstm = 64;
  std::size_t dense3 = 32;
  std::size_t window = 8;
  bool attention = true;
  // Emit log-stds from a head instead of state-independent parameters.
  bool head_log_std = false;
  double init_log_std = std::log(0.5);

  std::string describe() const;
};

struct PolicyOutputs {
  Var logits;    // B x 3
  Var means;     // B x 2
  Var log_stds;  // B x 2
  Var value;     // B x 1
};

struct PolicyValues {
  std::array<double, kBranchCount> logits{};
  std::array<double, kContinuousDims> means{};
  std::array<double, kContinuousDims> log_stds{};
  double value = 0.0;
};

// Separate actor and critic networks with the same trunk shape:
// dense -> dense -> LSTM over the window -> (attention) -> dense -> heads.
class ActorCritic {
 public:
  ActorCritic(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  ParameterSet& actor() { return actor_; }
  ParameterSet& critic() { return critic_; }
  const ParameterSet& actor() const { return actor_; }
  const ParameterSet& critic() const { return critic_; }

  // windows: B x (T * obs_size) with the oldest step first; any T >= 1.
  PolicyOutputs forward(Graph& g, const Tensor2D& windows);
  PolicyValues evaluate(std::span<const double> window);

  std::uint64_t spec_hash() const;
  void zero_all();
  void save(const std::filesystem::path& path) const;
  void load(const std::filesystem::path& path);

 private:
  struct Trunk {
    Dense d1;
    Dense d2;
    LstmCell lstm;
    SelfAttention attention;
    Dense d3;
  };

  Trunk make_trunk(ParameterSet& params, const std::string& prefix);
  Var run_trunk(Graph& g, ParameterSet& params, const Trunk& trunk, const Tensor2D& windows);

  NetworkSpec spec_;
  ParameterSet actor_;
  ParameterSet critic_;
  Trunk actor_trunk_;
  Trunk critic_trunk_;
  Dense logits_head_;
  Dense means_head_;
  Dense log_std_head_;
  std::size_t log_std_param_ = 0;
  Dense value_head_;
};

// Runs the actor/critic on one observation history (oldest first).
PolicyValues forward_actor(ActorCritic& net, std::span<const Observation> history);

// Stacks observations into a 1 x (T * obs_size) window row.
Tensor2D window_row(std::span<const Observation> history);

}  // namespace hwrisk::nn
