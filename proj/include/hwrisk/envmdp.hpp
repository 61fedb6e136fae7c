#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hwrisk/riskfield.hpp"
#include "hwrisk/simworld.hpp"
#include "hwrisk/trajectory.hpp"

namespace hwrisk {

inline constexpr int kSurroundingSlots = 6;
inline constexpr int kSvFeatures = 6;
inline constexpr int kOvFeatures = 7;
inline constexpr int kObservationSize = kSurroundingSlots * kSvFeatures + kOvFeatures;

// Slot order of the surrounding-vehicle blocks.
enum class Slot { kLeftLead, kLeftFollow, kSameLead, kSameFollow, kRightLead, kRightFollow };

struct SvBlock {
  double d_ver = 0.0;
  double d_la = 0.0;
  double dv_ver = 0.0;
  double dv_la = 0.0;
  double yaw = 0.0;
  double present = 0.0;
};

struct OvBlock {
  double v_ver = 0.0;
  double v_la = 0.0;
  double accel = 0.0;
  double pos_ver = 0.0;
  double yaw = 0.0;
  double leftmost = 0.0;
  double rightmost = 0.0;
};

struct Observation {
  std::array<SvBlock, kSurroundingSlots> sv{};
  OvBlock ov{};

  std::array<double, kObservationSize> flatten() const;
};

enum class Branch { kLeftChange = 0, kFollowing = 1, kRightChange = 2 };

struct ActionBounds {
  double a_long_max = 3.0;
  double a_lat_max = 2.0;
  double a_keep = 0.5;
};

struct HybridAction {
  Branch branch = Branch::kFollowing;
  double a_vertical = 0.0;
  double a_lateral = 0.0;  // positive to the left
};

HybridAction constrain_action(Branch branch, double a_vertical_sample,
                              double a_lateral_sample, const ActionBounds& bounds);

enum class RiskMode { kAdr, kTtc };

struct RewardConfig {
  double w_risk = 1.0;
  double w_vertical = 2.0;
  double w_position = 0.5;
  double w_limit = 100.0;
  double w_collision = 100.0;
  RiskMode risk_mode = RiskMode::kAdr;
  // Min-max bounds of the first three terms.
  double adr_min = 0.0;
  double adr_max = 1.0e8;
  double speed_min = 0.0;
  double speed_max = 120.0 / 3.6;
  double position_min = 0.0;
  double position_max = 1.75;
  double ttc_threshold = 3.0;
};

struct RewardBreakdown {
  double r_risk = 0.0;       // normalised risk in [0, 1]
  double r_vertical = 0.0;   // normalised speed in [0, 1]
  double r_position = 0.0;   // normalised lateral offset in [0, 1]
  double r_limit = 0.0;      // k * (v - v_limit)
  double r_collision = 0.0;  // 0 or 1
  double total = 0.0;
  bool speeding = false;
};

// Signed weighted composition of the five terms.
double compose_reward(const RewardBreakdown& r, const RewardConfig& cfg);

struct SceneVehicle {
  int id = 0;
  int lane = 0;
  VehicleState state;
};

// Indices into `others` for the six slots (-1 when no candidate or out of
// perception range).
std::array<int, kSurroundingSlots> select_surrounding(
    const SceneVehicle& ego, std::span<const SceneVehicle> others,
    int lane_count, double perception_range);

struct ObservationScales {
  double perception_range = 50.0;
  double speed_limit = 120.0 / 3.6;
  double a_long_max = 3.0;
  double half_lane = 1.75;
};

Observation make_observation(const SceneVehicle& ego,
                             std::span<const SceneVehicle> others,
                             const std::array<int, kSurroundingSlots>& slots,
                             const HighwayConfig& hw, const ObservationScales& scales);

struct EnvConfig {
  SimConfig sim;
  RiskFieldParams risk;
  RewardConfig reward;
  ActionBounds bounds;
  int max_steps = 600;
  double perception_range = 50.0;
  double ego_mass = 1500.0;
  double insert_x_min = 50.0;
  double insert_x_max = 400.0;
  double insert_min_gap = 20.0;
  int insert_retries = 100;
  // Vehicles within this longitudinal distance of the ego enter the log.
  double log_radius = 150.0;
  bool record_log = true;

  void validate() const;
};

SceneVehicle scene_vehicle(const Vehicle& v);

Observation build_observation(const WorldState& world, int ego_id,
                              const EnvConfig& cfg);

struct ActionOutcome {
  bool collision = false;
};

RewardBreakdown compute_reward(const WorldState& world, int ego_id,
                               const ActionOutcome& outcome, const EnvConfig& cfg);

// ADR on the ego from its selected surrounding vehicles.
double ego_adr(const WorldState& world, int ego_id, const EnvConfig& cfg);

enum class DoneReason { kNone, kCollision, kOffRoad, kRoadEnd, kHorizon };

struct StepInfo {
  StepEvents events;
  double adr = 0.0;
  double ego_speed = 0.0;
  DoneReason reason = DoneReason::kNone;
};

struct StepResult {
  Observation obs;
  RewardBreakdown reward;
  bool done = false;
  StepInfo info;
};

class HighwayEnv {
 public:
  explicit HighwayEnv(EnvConfig cfg);

  Observation reset(std::uint64_t seed);
  StepResult step(const HybridAction& action);

  const EnvConfig& config() const { return cfg_; }
  const WorldState& world() const { return world_; }
  int ego_id() const { return ego_id_; }
  bool done() const { return done_; }
  int steps() const { return steps_; }
  const EpisodeLog& log() const { return log_; }

 private:
  void record_frame();

  EnvConfig cfg_;
  WorldState world_;
  int ego_id_ = 0;
  int steps_ = 0;
  bool done_ = true;
  EpisodeLog log_;
};

}  // namespace hwrisk
