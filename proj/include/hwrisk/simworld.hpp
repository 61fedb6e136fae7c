#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <utility>
#include <vector>

#include "hwrisk/riskfield.hpp"

namespace hwrisk {

struct HighwayConfig {
  double length = 2800.0;
  int lane_count = 3;
  double lane_width = 3.5;
  double speed_limit = 120.0 / 3.6;
  double heavy_fraction = 0.25;
  double arrival_rate = 1.2;
  double warmup = 115.0;
  double initial_speed = 20.0;
  double dt = 0.1;
  // Keep the ego footprint on the carriageway: the edge stops lateral motion.
  bool contain_ego = true;

  double lane_center(int lane) const { return (lane + 0.5) * lane_width; }
  double road_width() const { return lane_count * lane_width; }
  // Lane whose centre is nearest to y, clamped to the road.
  int lane_of(double y) const;
  void validate() const;
};

struct IdmParams {
  double a_max = 2.0;
  double b_comf = 2.0;
  double v0 = 120.0 / 3.6;
  double s0 = 2.0;
  double t_headway = 1.2;
  double delta = 4.0;
};

struct MobilParams {
  double politeness = 0.3;
  double threshold = 0.2;
  double b_safe = 3.0;
  double duration = 3.0;   // lateral ramp length, seconds
  double cooldown = 4.0;   // minimum time between two manoeuvres
};

struct FleetParams {
  double light_mass_min = 1000.0;
  double light_mass_max = 2000.0;
  double heavy_mass_min = 10000.0;
  double heavy_mass_max = 40000.0;
  double light_length = 4.5;
  double light_width = 1.8;
  double heavy_length = 12.0;
  double heavy_width = 2.5;
  // Desired speed as a fraction of the speed limit, drawn uniformly.
  double light_speed_factor_min = 0.80;
  double light_speed_factor_max = 1.00;
  double heavy_speed_factor_min = 0.65;
  double heavy_speed_factor_max = 0.80;
  double entry_gap = 15.0;  // free bumper gap required at the entry
  double emergency_decel = 9.0;
};

struct SimConfig {
  HighwayConfig highway;
  IdmParams idm;
  MobilParams mobil;
  FleetParams fleet;
};

enum class Controller { kEgo, kAmbient };

struct Vehicle {
  int id = 0;
  VehicleState state;
  int lane = 0;
  Controller controller = Controller::kAmbient;
  double desired_speed = 0.0;
  // Lateral ramp bookkeeping; target_lane < 0 when not changing lanes.
  int source_lane = -1;
  int target_lane = -1;
  double lc_elapsed = 0.0;
  double lc_from_y = 0.0;
  double since_lane_change = 1e9;

  bool changing_lane() const { return target_lane >= 0; }
};

struct PendingArrival {
  int lane;
  VehicleClass vclass;
  double mass;
  double desired_speed;
};

struct WorldState {
  double time = 0.0;
  std::vector<Vehicle> vehicles;  // ordered by id
  std::mt19937_64 rng;
  int next_id = 1;
  std::vector<PendingArrival> pending;
  std::int64_t arrivals = 0;
  std::int64_t spawned = 0;
  std::int64_t heavy_spawned = 0;

  explicit WorldState(std::uint64_t seed = 0) : rng(seed) {}

  Vehicle* find(int id);
  const Vehicle* find(int id) const;
  // Inserts keeping id order; returns the assigned id.
  int add(Vehicle v);
};

double bumper_gap(const VehicleState& follower, const VehicleState& leader);

// Intelligent Driver Model acceleration along the lane axis.
double idm_acceleration(const VehicleState& follower,
                        const VehicleState* leader, const IdmParams& params);

enum class LaneDecision { kStay, kLeft, kRight };

struct Neighbor {
  VehicleState state;
  double desired_speed = 0.0;
};

struct LaneNeighbors {
  bool exists = false;
  std::optional<Neighbor> leader;
  std::optional<Neighbor> follower;
};

struct MobilNeighbors {
  LaneNeighbors current;
  LaneNeighbors left;
  LaneNeighbors right;
};

// MOBIL decision. Target-lane evaluation assumes the subject keeps its
// longitudinal state. Equal incentives resolve stay > left > right.
LaneDecision mobil_lane_change(const Neighbor& subject,
                               const MobilNeighbors& neighbors,
                               const IdmParams& idm, const MobilParams& mobil);

// Point-mass update with constant accelerations over dt. The longitudinal
// velocity never goes negative: if it would, the vehicle stops within the
// step at the exact stopping distance.
VehicleState step_kinematics(const VehicleState& v, double a_long,
                             double a_lat, double dt);

VehicleState make_vehicle_state(VehicleClass vclass, double mass, double x,
                                double y, double speed,
                                const FleetParams& fleet);

// Draws this tick's Poisson arrivals and places them (or leaves them
// pending when the entry of their lane is occupied).
void spawn_vehicles(WorldState& world, const SimConfig& cfg);

// Strict overlap of heading-aligned footprints; touching is not a collision.
bool footprints_overlap(const VehicleState& a, const VehicleState& b);

std::vector<std::pair<int, int>> detect_collisions(const WorldState& world);

struct EgoControls {
  double a_long = 0.0;
  double a_lat = 0.0;
};

struct LaneChangeEvent {
  int id;
  int from_lane;
  int to_lane;
};

struct StepEvents {
  std::vector<std::pair<int, int>> collisions;
  std::vector<int> despawned;
  std::vector<LaneChangeEvent> lane_changes;
};

// One tick: ambient decisions, kinematics, despawn, spawn, collision scan.
// The ego vehicle (if any) is never despawned here.
StepEvents world_step(WorldState& world, const SimConfig& cfg,
                      const EgoControls& ego_controls);

}  // namespace hwrisk
