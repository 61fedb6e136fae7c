#include "hwrisk/envmdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hwrisk/errors.hpp"

namespace hwrisk {

std::array<double, kObservationSize> Observation::flatten() const {
  std::array<double, kObservationSize> out{};
  std::size_t k = 0;
  for (const SvBlock& b : sv) {
    out[k++] = b.d_ver;
    out[k++] = b.d_la;
    out[k++] = b.dv_ver;
    out[k++] = b.dv_la;
    out[k++] = b.yaw;
    out[k++] = b.present;
  }
  out[k++] = ov.v_ver;
  out[k++] = ov.v_la;
  out[k++] = ov.accel;
  out[k++] = ov.pos_ver;
  out[k++] = ov.yaw;
  out[k++] = ov.leftmost;
  out[k++] = ov.rightmost;
  return out;
}

HybridAction constrain_action(Branch branch, double a_vertical_sample,
                              double a_lateral_sample, const ActionBounds& bounds) {
  HybridAction a;
  a.branch = branch;
  a.a_vertical = std::clamp(a_vertical_sample, -bounds.a_long_max, bounds.a_long_max);
  switch (branch) {
    case Branch::kLeftChange:
      a.a_lateral = std::clamp(a_lateral_sample, 0.0, bounds.a_lat_max);
      break;
    case Branch::kRightChange:
      a.a_lateral = std::clamp(a_lateral_sample, -bounds.a_lat_max, 0.0);
      break;
    case Branch::kFollowing:
      a.a_lateral = std::clamp(a_lateral_sample, -bounds.a_keep, bounds.a_keep);
      break;
  }
  return a;
}

double compose_reward(const RewardBreakdown& r, const RewardConfig& cfg) {
  return -cfg.w_risk * r.r_risk + cfg.w_vertical * r.r_vertical -
         cfg.w_position * r.r_position - cfg.w_limit * r.r_limit -
         cfg.w_collision * r.r_collision;
}

std::array<int, kSurroundingSlots> select_surrounding(
    const SceneVehicle& ego, std::span<const SceneVehicle> others,
    int lane_count, double perception_range) {
  std::array<int, kSurroundingSlots> slots;
  slots.fill(-1);
  std::array<double, kSurroundingSlots> best;
  best.fill(std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < others.size(); ++i) {
    const SceneVehicle& o = others[i];
    if (o.id == ego.id) continue;
    const int offset = o.lane - ego.lane;  // +1 left, -1 right
    if (offset < -1 || offset > 1) continue;
    if (o.lane < 0 || o.lane >= lane_count) continue;
    const double dx = o.state.x - ego.state.x;
    const bool lead = dx > 0.0 || (dx == 0.0 && o.id > ego.id);
    const int base = offset == 1 ? 0 : (offset == 0 ? 2 : 4);
    const int slot = base + (lead ? 0 : 1);
    const double dist = std::abs(dx);
    if (dist < best[static_cast<std::size_t>(slot)]) {
      best[static_cast<std::size_t>(slot)] = dist;
      slots[static_cast<std::size_t>(slot)] = static_cast<int>(i);
    }
  }
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (slots[s] >= 0 && best[s] > perception_range) slots[s] = -1;
  }
  return slots;
}

Observation make_observation(const SceneVehicle& ego,
                             std::span<const SceneVehicle> others,
                             const std::array<int, kSurroundingSlots>& slots,
                             const HighwayConfig& hw, const ObservationScales& sc) {
  Observation obs;
  const VehicleState& e = ego.state;
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (slots[s] < 0) continue;
    const VehicleState& o = others[static_cast<std::size_t>(slots[s])].state;
    SvBlock& b = obs.sv[s];
    b.d_ver = (o.x - e.x) / sc.perception_range;
    b.d_la = (o.y - e.y) / sc.perception_range;
    b.dv_ver = (o.v_long() - e.v_long()) / sc.speed_limit;
    b.dv_la = (o.v_lat() - e.v_lat()) / sc.speed_limit;
    b.yaw = o.heading;
    b.present = 1.0;
  }
  obs.ov.v_ver = e.v_long() / sc.speed_limit;
  obs.ov.v_la = e.v_lat() / sc.speed_limit;
  obs.ov.accel = e.acceleration / sc.a_long_max;
  obs.ov.pos_ver = (e.y - hw.lane_center(hw.lane_of(e.y))) / sc.half_lane;
  obs.ov.yaw = e.heading;
  obs.ov.leftmost = ego.lane == hw.lane_count - 1 ? 1.0 : 0.0;
  obs.ov.rightmost = ego.lane == 0 ? 1.0 : 0.0;
  return obs;
}

void EnvConfig::validate() const {
  sim.highway.validate();
  risk.validate();
  if (max_steps <= 0) throw ConfigError("max_steps must be positive");
  if (!(perception_range > 0.0)) throw ConfigError("perception_range must be positive");
  if (!(ego_mass > 0.0)) throw ConfigError("ego_mass must be positive");
  for (double w : {reward.w_risk, reward.w_vertical, reward.w_position,
                   reward.w_limit, reward.w_collision}) {
    if (!(w >= 0.0)) throw ConfigError("reward weights must be non-negative");
  }
  if (!(reward.adr_max > reward.adr_min && reward.speed_max > reward.speed_min &&
        reward.position_max > reward.position_min)) {
    throw ConfigError("normalisation bounds need max > min");
  }
  if (!(insert_x_max >= insert_x_min)) throw ConfigError("empty insertion range");
}

SceneVehicle scene_vehicle(const Vehicle& v) { return {v.id, v.lane, v.state}; }

namespace {

struct Scene {
  SceneVehicle ego;
  std::vector<SceneVehicle> others;
  std::array<int, kSurroundingSlots> slots;
};

Scene gather_scene(const WorldState& world, int ego_id, const EnvConfig& cfg) {
  const Vehicle* ego = world.find(ego_id);
  if (ego == nullptr) throw MissingEgo("vehicle " + std::to_string(ego_id));
  Scene scene;
  scene.ego = scene_vehicle(*ego);
  scene.others.reserve(world.vehicles.size());
  for (const Vehicle& v : world.vehicles) {
    if (v.id != ego_id) scene.others.push_back(scene_vehicle(v));
  }
  scene.slots = select_surrounding(scene.ego, scene.others,
                                   cfg.sim.highway.lane_count, cfg.perception_range);
  return scene;
}

ObservationScales scales_of(const EnvConfig& cfg) {
  return {cfg.perception_range, cfg.sim.highway.speed_limit, cfg.bounds.a_long_max,
          0.5 * cfg.sim.highway.lane_width};
}

double normalise(double value, double lo, double hi) {
  return std::clamp((value - lo) / (hi - lo), 0.0, 1.0);
}

double scene_adr(const Scene& scene, const RiskFieldParams& risk) {
  std::vector<VehicleState> svs;
  for (int idx : scene.slots) {
    if (idx >= 0) svs.push_back(scene.others[static_cast<std::size_t>(idx)].state);
  }
  return adr(scene.ego.state, svs, risk);
}

double scene_inverse_ttc(const Scene& scene, double threshold) {
  const int lead = scene.slots[static_cast<std::size_t>(Slot::kSameLead)];
  if (lead < 0) return 0.0;
  const VehicleState& l = scene.others[static_cast<std::size_t>(lead)].state;
  const VehicleState& f = scene.ego.state;
  const double gap = bumper_gap(f, l);
  if (gap <= 0.0) return 1.0;
  const double closing = f.v_long() - l.v_long();
  if (closing <= 0.0) return 0.0;
  return std::clamp(threshold * closing / gap, 0.0, 1.0);
}

bool off_road(const VehicleState& s, const HighwayConfig& hw) {
  return s.y < 0.0 || s.y > hw.road_width();
}

}  // namespace

Observation build_observation(const WorldState& world, int ego_id,
                              const EnvConfig& cfg) {
  const Scene scene = gather_scene(world, ego_id, cfg);
  return make_observation(scene.ego, scene.others, scene.slots, cfg.sim.highway,
                          scales_of(cfg));
}

double ego_adr(const WorldState& world, int ego_id, const EnvConfig& cfg) {
  return scene_adr(gather_scene(world, ego_id, cfg), cfg.risk);
}

RewardBreakdown compute_reward(const WorldState& world, int ego_id,
                               const ActionOutcome& outcome, const EnvConfig& cfg) {
  const Scene scene = gather_scene(world, ego_id, cfg);
  const RewardConfig& rc = cfg.reward;
  const HighwayConfig& hw = cfg.sim.highway;
  const VehicleState& e = scene.ego.state;
  RewardBreakdown r;
  if (rc.risk_mode == RiskMode::kAdr) {
    r.r_risk = normalise(scene_adr(scene, cfg.risk), rc.adr_min, rc.adr_max);
  } else {
    r.r_risk = scene_inverse_ttc(scene, rc.ttc_threshold);
  }
  const double v_ver = e.v_long();
  r.r_vertical = normalise(v_ver, rc.speed_min, rc.speed_max);
  const double offset = std::abs(e.y - hw.lane_center(hw.lane_of(e.y)));
  r.r_position = normalise(offset, rc.position_min, rc.position_max);
  r.speeding = v_ver > hw.speed_limit;
  r.r_limit = r.speeding ? v_ver - hw.speed_limit : 0.0;
  r.r_collision = outcome.collision ? 1.0 : 0.0;
  r.total = compose_reward(r, rc);
  return r;
}

HighwayEnv::HighwayEnv(EnvConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

Observation HighwayEnv::reset(std::uint64_t seed) {
  const HighwayConfig& hw = cfg_.sim.highway;
  world_ = WorldState(seed);
  const auto warmup_steps = static_cast<long>(std::llround(hw.warmup / hw.dt));
  for (long i = 0; i < warmup_steps; ++i) world_step(world_, cfg_.sim, {});

  std::uniform_int_distribution<int> lane_pick(0, hw.lane_count - 1);
  const double x_hi = std::min(cfg_.insert_x_max, hw.length);
  std::uniform_real_distribution<double> x_pick(cfg_.insert_x_min, x_hi);
  Vehicle ego;
  ego.controller = Controller::kEgo;
  ego.desired_speed = hw.speed_limit;
  bool placed = false;
  for (int attempt = 0; attempt < cfg_.insert_retries && !placed; ++attempt) {
    const int lane = lane_pick(world_.rng);
    const double x = x_pick(world_.rng);
    ego.state = make_vehicle_state(VehicleClass::kLight, cfg_.ego_mass, x,
                                   hw.lane_center(lane), hw.initial_speed, cfg_.sim.fleet);
    ego.lane = lane;
    placed = true;
    for (const Vehicle& v : world_.vehicles) {
      // Vehicles merging into the lane count as occupants.
      if (std::abs(v.state.y - ego.state.y) >= 0.5 * (v.state.width + ego.state.width) &&
          v.target_lane != lane) {
        continue;
      }
      const double gap = v.state.x >= x ? bumper_gap(ego.state, v.state)
                                         : bumper_gap(v.state, ego.state);
      if (gap < cfg_.insert_min_gap) {
        placed = false;
        break;
      }
    }
  }
  if (!placed) {
    throw NoFeasibleInsertion("after " + std::to_string(cfg_.insert_retries) + " attempts");
  }
  ego_id_ = world_.add(ego);
  steps_ = 0;
  done_ = false;
  log_ = EpisodeLog{};
  log_.dt = hw.dt;
  log_.subject_id = ego_id_;
  record_frame();
  return build_observation(world_, ego_id_, cfg_);
}

void HighwayEnv::record_frame() {
  if (!cfg_.record_log) return;
  const Vehicle* ego = world_.find(ego_id_);
  Frame f;
  f.frame = steps_;
  for (const Vehicle& v : world_.vehicles) {
    if (std::abs(v.state.x - ego->state.x) <= cfg_.log_radius) {
      f.vehicles.push_back(to_record(steps_, v.id, v.lane, v.state));
    }
  }
  log_.frames.push_back(std::move(f));
}

StepResult HighwayEnv::step(const HybridAction& action) {
  if (done_) throw EpisodeFinished("reset() before stepping again");
  const HighwayConfig& hw = cfg_.sim.highway;
  const HybridAction a =
      constrain_action(action.branch, action.a_vertical, action.a_lateral, cfg_.bounds);
  StepResult out;
  out.info.events = world_step(world_, cfg_.sim, {a.a_vertical, a.a_lateral});
  ++steps_;

  const Vehicle* ego = world_.find(ego_id_);
  bool collided = false;
  for (const auto& [i, j] : out.info.events.collisions) {
    if (i == ego_id_ || j == ego_id_) collided = true;
  }
  const bool left_road = off_road(ego->state, hw);
  if (collided) {
    out.info.reason = DoneReason::kCollision;
  } else if (left_road) {
    out.info.reason = DoneReason::kOffRoad;
  } else if (ego->state.x >= hw.length) {
    out.info.reason = DoneReason::kRoadEnd;
  } else if (steps_ >= cfg_.max_steps) {
    out.info.reason = DoneReason::kHorizon;
  }
  out.done = out.info.reason != DoneReason::kNone;
  done_ = out.done;

  const Scene scene = gather_scene(world_, ego_id_, cfg_);
  out.obs = make_observation(scene.ego, scene.others, scene.slots, hw, scales_of(cfg_));
  out.reward = compute_reward(world_, ego_id_, ActionOutcome{collided || left_road}, cfg_);
  out.info.adr = scene_adr(scene, cfg_.risk);
  out.info.ego_speed = ego->state.v_long();
  record_frame();
  if (done_) log_.complete = true;
  return out;
}

}  // namespace hwrisk
