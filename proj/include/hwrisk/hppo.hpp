#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "hwrisk/envmdp.hpp"
#include "hwrisk/network.hpp"
#include "hwrisk/optimizer.hpp"

namespace hwrisk {

enum class LogProbMode {
  kPreClip,         // Gaussian density at the raw sample
  kClippedDensity,  // density inside the box, tail mass at the bounds
};

struct TrainerConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double value_clip_eps = 0.2;
  double value_coeff = 0.5;
  double entropy_coeff = 0.01;
  int minibatch = 4;
  int epochs = 4;
  int horizon = 2048;
  int iterations = 100;
  int num_envs = 1;
  bool normalize_advantages = true;
  bool bootstrap_truncation = true;
  LogProbMode log_prob_mode = LogProbMode::kPreClip;
  double base_lr = 3e-4;
  double clip_norm = 0.1;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::uint64_t seed = 1;

  void validate() const;
};

// Generalised advantage estimation over one contiguous segment. dones[t]
// marks that the episode ended after step t; bootstrap is V of the state
// following the last step (ignored when the last step is terminal).
std::pair<std::vector<double>, std::vector<double>> gae_advantages(
    std::span<const double> rewards, std::span<const double> values,
    std::span<const bool> dones, double bootstrap, double gamma, double lambda);

double clipped_policy_objective(std::span<const double> logp_new,
                                std::span<const double> logp_old,
                                std::span<const double> advantages, double eps);

double clipped_value_loss(std::span<const double> v_new, std::span<const double> v_old,
                          std::span<const double> returns, double eps);

double total_loss(double j_d, double j_c, double l_bl, double h_d, double h_c,
                  double value_coeff = 0.5, double entropy_coeff = 0.01);

// Graph versions; logp_new / v_new are B x 1.
nn::Var clipped_policy_objective(nn::Var logp_new, const nn::Tensor2D& logp_old,
                                 const nn::Tensor2D& advantages, double eps);
nn::Var clipped_value_loss(nn::Var v_new, const nn::Tensor2D& v_old,
                           const nn::Tensor2D& returns, double eps);

struct SampledAction {
  HybridAction action;  // constrained, ready for the environment
  int branch = 1;
  std::array<double, 2> raw{};  // pre-clip continuous sample
  double logp_d = 0.0;
  double logp_c = 0.0;
};

SampledAction sample_hybrid_action(std::span<const double> logits, std::span<const double> means,
                                   std::span<const double> log_stds, std::mt19937_64& rng,
                                   const ActionBounds& bounds,
                                   LogProbMode mode = LogProbMode::kPreClip);

// Mode of the policy: argmax branch, mean accelerations.
HybridAction greedy_action(const nn::PolicyValues& pv, const ActionBounds& bounds);

// Log-probability of the continuous sample for one row (plain version of the
// graph computation used in training).
double continuous_log_prob(std::span<const double> raw, std::span<const double> means,
                           std::span<const double> log_stds, int branch,
                           const ActionBounds& bounds, LogProbMode mode);

struct RolloutStep {
  std::vector<double> window;  // window * obs_size values, oldest first
  int branch = 1;
  std::array<double, 2> raw{};
  double reward = 0.0;
  bool done = false;
  double logp_d = 0.0;
  double logp_c = 0.0;
  double value = 0.0;
  double adr = 0.0;
  // V of the final observation when the episode hit the step horizon.
  bool truncated = false;
  double truncation_value = 0.0;
};

struct RolloutBuffer {
  std::vector<RolloutStep> steps;
  // One segment per environment: [start, start + length).
  std::vector<std::pair<std::size_t, std::size_t>> segments;
  std::vector<double> bootstrap;
  std::vector<double> advantages;
  std::vector<double> returns;
  bool estimated = false;

  std::size_t size() const { return steps.size(); }
  // With bootstrap_truncation, a horizon cut adds gamma * V(s_T) to the last
  // reward instead of treating the cut as a true terminal.
  void estimate(double gamma, double lambda, bool bootstrap_truncation = true);
};

struct EpisodeStats {
  double ret = 0.0;
  int length = 0;
  double mean_adr = 0.0;
  DoneReason reason = DoneReason::kNone;
};

// Parallel-in-data environments driven by one policy. Observation windows
// persist across collect() calls and reset at episode boundaries.
class RolloutCollector {
 public:
  RolloutCollector(const EnvConfig& env_cfg, int num_envs, std::size_t window,
                   std::uint64_t seed);

  RolloutBuffer collect(nn::ActorCritic& net, int horizon, std::mt19937_64& rng,
                        const ActionBounds& bounds, LogProbMode mode);

  // Episodes finished during the most recent collect().
  const std::vector<EpisodeStats>& finished() const { return finished_; }
  std::size_t num_envs() const { return envs_.size(); }
  // Mean return of episodes still running (used when none finished).
  double running_mean_return() const;

 private:
  struct Slot {
    HighwayEnv env;
    std::deque<Observation> history;
    double ret = 0.0;
    double adr_sum = 0.0;
    int length = 0;
  };

  void start_episode(Slot& slot);
  std::vector<double> window_of(const Slot& slot) const;

  std::vector<Slot> envs_;
  std::size_t window_;
  std::mt19937_64 seeds_;
  std::vector<EpisodeStats> finished_;
};

struct Minibatch {
  nn::Tensor2D windows;
  std::vector<int> branch;
  nn::Tensor2D raw;  // B x 2
  nn::Tensor2D logp_d_old;
  nn::Tensor2D logp_c_old;
  nn::Tensor2D advantages;
  nn::Tensor2D returns;
  nn::Tensor2D values_old;
};

Minibatch make_minibatch(const RolloutBuffer& buffer, std::span<const std::size_t> index,
                         bool normalize_advantages);

struct LossTerms {
  nn::Var total;
  nn::Var j_d;
  nn::Var j_c;
  nn::Var l_bl;
  nn::Var h_d;
  nn::Var h_c;
  nn::Var logp_d;  // B x 1, current policy
  nn::Var logp_c;  // B x 1
};

LossTerms hppo_loss(nn::Graph& g, nn::ActorCritic& net, const Minibatch& mb,
                    const TrainerConfig& cfg, const ActionBounds& bounds);

struct LogRow {
  int iteration = 0;
  double mean_return = 0.0;
  double mean_adr = 0.0;
  double loss_total = 0.0;
  double loss_value = 0.0;
  double entropy_d = 0.0;
  double entropy_c = 0.0;
  double lr = 0.0;
  int episodes = 0;
  double collision_rate = 0.0;
};

struct TrainingLog {
  std::vector<LogRow> rows;
};

void write_learning_curve(std::ostream& out, const TrainingLog& log);

class HppoTrainer {
 public:
  HppoTrainer(TrainerConfig cfg, EnvConfig env_cfg, nn::NetworkSpec spec);

  // One collect + B epochs of minibatch updates.
  LogRow iterate();
  TrainingLog run(const std::function<void(const LogRow&)>& on_row = {});

  nn::ActorCritic& network() { return net_; }
  const nn::ActorCritic& old_policy() const { return old_; }
  const RolloutBuffer& last_buffer() const { return buffer_; }
  int iteration() const { return iteration_; }
  void set_output_dir(std::filesystem::path dir) { out_dir_ = std::move(dir); }
  // Called between minibatch updates; used by tests to watch invariants.
  void set_update_hook(std::function<void(const HppoTrainer&)> hook) { hook_ = std::move(hook); }

 private:
  TrainerConfig cfg_;
  EnvConfig env_cfg_;
  nn::ActorCritic net_;
  nn::ActorCritic old_;
  nn::OptimizerState actor_opt_;
  nn::OptimizerState critic_opt_;
  RolloutCollector collector_;
  std::mt19937_64 rng_;
  RolloutBuffer buffer_;
  int iteration_ = 0;
  std::filesystem::path out_dir_;
  std::function<void(const HppoTrainer&)> hook_;
};

TrainingLog train(const TrainerConfig& cfg, const EnvConfig& env_cfg, const nn::NetworkSpec& spec,
                  const std::filesystem::path& out_dir = {});

// Runs one episode with the given action source; returns the env log.
struct EpisodeRun {
  EpisodeStats stats;
  EpisodeLog log;
};

EpisodeRun run_policy_episode(HighwayEnv& env, nn::ActorCritic& net, std::uint64_t seed,
                              bool greedy, std::mt19937_64& rng);
EpisodeRun run_random_episode(HighwayEnv& env, std::uint64_t seed, std::mt19937_64& rng);

}  // namespace hwrisk
