#include "hwrisk/simworld.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "hwrisk/errors.hpp"

namespace hwrisk {

int HighwayConfig::lane_of(double y) const {
  const int lane = static_cast<int>(std::floor(y / lane_width));
  return std::clamp(lane, 0, lane_count - 1);
}

void HighwayConfig::validate() const {
  if (lane_count < 2) throw ConfigError("lane_count must be at least 2");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (!(heavy_fraction >= 0.0 && heavy_fraction <= 1.0)) {
    throw ConfigError("heavy_fraction must lie in [0, 1]");
  }
  if (!(arrival_rate >= 0.0)) throw ConfigError("arrival_rate must be >= 0");
  if (!(length > 0.0 && lane_width > 0.0 && speed_limit > 0.0)) {
    throw ConfigError("road length, lane width and speed limit must be positive");
  }
  if (!(warmup >= 0.0 && initial_speed >= 0.0)) {
    throw ConfigError("warmup and initial_speed must be non-negative");
  }
}

Vehicle* WorldState::find(int id) {
  auto it = std::lower_bound(vehicles.begin(), vehicles.end(), id,
                             [](const Vehicle& v, int key) { return v.id < key; });
  return (it != vehicles.end() && it->id == id) ? &*it : nullptr;
}

const Vehicle* WorldState::find(int id) const {
  return const_cast<WorldState*>(this)->find(id);
}

int WorldState::add(Vehicle v) {
  if (v.id <= 0) v.id = next_id;
  next_id = std::max(next_id, v.id + 1);
  auto it = std::lower_bound(vehicles.begin(), vehicles.end(), v.id,
                             [](const Vehicle& a, int key) { return a.id < key; });
  const int id = v.id;
  vehicles.insert(it, std::move(v));
  return id;
}

double bumper_gap(const VehicleState& follower, const VehicleState& leader) {
  return (leader.x - 0.5 * leader.length) - (follower.x + 0.5 * follower.length);
}

double idm_acceleration(const VehicleState& follower,
                        const VehicleState* leader, const IdmParams& p) {
  const double v = follower.v_long();
  double accel = 1.0 - std::pow(v / p.v0, p.delta);
  if (leader != nullptr) {
    const double gap = bumper_gap(follower, *leader);
    if (!(gap > 0.0)) {
      throw NonPositiveGap("bumper gap " + std::to_string(gap) + " m");
    }
    const double dv = v - leader->v_long();
    const double s_star =
        p.s0 + std::max(0.0, v * p.t_headway +
                                 v * dv / (2.0 * std::sqrt(p.a_max * p.b_comf)));
    accel -= (s_star / gap) * (s_star / gap);
  }
  return p.a_max * accel;
}

namespace {

constexpr double kUnsafe = -std::numeric_limits<double>::infinity();

// IDM acceleration that reports overlap as an unsafe sentinel instead of
// throwing; MOBIL treats it as a forbidden manoeuvre.
double guarded_idm(const Neighbor& follower, const Neighbor* leader,
                   const IdmParams& idm) {
  IdmParams p = idm;
  p.v0 = follower.desired_speed > 0.0 ? follower.desired_speed : idm.v0;
  if (leader != nullptr && !(bumper_gap(follower.state, leader->state) > 0.0)) {
    return kUnsafe;
  }
  return idm_acceleration(follower.state, leader ? &leader->state : nullptr, p);
}

const Neighbor* ptr(const std::optional<Neighbor>& n) {
  return n ? &*n : nullptr;
}

// Incentive for moving into `side`, or kUnsafe when forbidden.
double mobil_incentive(const Neighbor& subject, const LaneNeighbors& current,
                       const LaneNeighbors& side, const IdmParams& idm,
                       const MobilParams& mobil) {
  if (!side.exists) return kUnsafe;
  const double self_new = guarded_idm(subject, ptr(side.leader), idm);
  if (self_new == kUnsafe) return kUnsafe;
  const double self_old = guarded_idm(subject, ptr(current.leader), idm);
  double others = 0.0;
  if (side.follower) {
    if (!(bumper_gap(side.follower->state, subject.state) > 0.0)) return kUnsafe;
    const double after = guarded_idm(*side.follower, &subject, idm);
    if (after < -mobil.b_safe) return kUnsafe;
    const double before = guarded_idm(*side.follower, ptr(side.leader), idm);
    if (before != kUnsafe) others += after - before;
  }
  if (current.follower) {
    const double before = guarded_idm(*current.follower, &subject, idm);
    const double after = guarded_idm(*current.follower, ptr(current.leader), idm);
    if (before != kUnsafe && after != kUnsafe) others += after - before;
  }
  const double own = (self_old == kUnsafe) ? self_new : self_new - self_old;
  return own + mobil.politeness * others;
}

}  // namespace

LaneDecision mobil_lane_change(const Neighbor& subject,
                               const MobilNeighbors& neighbors,
                               const IdmParams& idm, const MobilParams& mobil) {
  const double left =
      mobil_incentive(subject, neighbors.current, neighbors.left, idm, mobil);
  const double right =
      mobil_incentive(subject, neighbors.current, neighbors.right, idm, mobil);
  const bool left_ok = left != kUnsafe && left > mobil.threshold;
  const bool right_ok = right != kUnsafe && right > mobil.threshold;
  if (left_ok && (!right_ok || left >= right)) return LaneDecision::kLeft;
  if (right_ok) return LaneDecision::kRight;
  return LaneDecision::kStay;
}

namespace {

struct LongitudinalUpdate {
  double dx;
  double v;
};

LongitudinalUpdate integrate_floored(double v, double a, double dt) {
  const double v_next = v + a * dt;
  if (v_next >= 0.0) return {v * dt + 0.5 * a * dt * dt, v_next};
  // Stops inside the step (a < 0 here since v >= 0).
  const double t_stop = v / -a;
  return {v * t_stop + 0.5 * a * t_stop * t_stop, 0.0};
}

void set_velocity(VehicleState& s, double v_long, double v_lat) {
  s.speed = std::hypot(v_long, v_lat);
  s.heading = std::atan2(v_lat, v_long);
}

}  // namespace

VehicleState step_kinematics(const VehicleState& v, double a_long,
                             double a_lat, double dt) {
  VehicleState out = v;
  const double v_long = std::max(0.0, v.v_long());
  const LongitudinalUpdate lon = integrate_floored(v_long, a_long, dt);
  const double v_lat = v.v_lat();
  out.x += lon.dx;
  out.y += v_lat * dt + 0.5 * a_lat * dt * dt;
  set_velocity(out, lon.v, v_lat + a_lat * dt);
  out.acceleration = a_long * std::cos(out.heading) + a_lat * std::sin(out.heading);
  return out;
}

VehicleState make_vehicle_state(VehicleClass vclass, double mass, double x,
                                double y, double speed,
                                const FleetParams& fleet) {
  VehicleState s;
  s.x = x;
  s.y = y;
  s.speed = speed;
  s.mass = mass;
  s.vclass = vclass;
  const bool heavy = vclass == VehicleClass::kHeavy;
  s.length = heavy ? fleet.heavy_length : fleet.light_length;
  s.width = heavy ? fleet.heavy_width : fleet.light_width;
  return s;
}

namespace {

// Lanes whose band the lateral footprint of s overlaps.
std::pair<int, int> occupied_lanes(const VehicleState& s, const HighwayConfig& hw) {
  const double half = 0.5 * s.width;
  const int lo = hw.lane_of(s.y - half + 1e-9);
  const int hi = hw.lane_of(s.y + half - 1e-9);
  return {lo, hi};
}

bool occupies(const VehicleState& s, int lane, const HighwayConfig& hw) {
  const auto [lo, hi] = occupied_lanes(s, hw);
  return lane >= lo && lane <= hi;
}

// The entry needs a free bumper gap and a leader the newcomer can follow
// without braking harder than b_safe.
bool entry_free(const WorldState& world, const PendingArrival& a, double new_length,
                const SimConfig& cfg) {
  const double needed = new_length + cfg.fleet.entry_gap;
  const Vehicle* leader = nullptr;
  for (const Vehicle& v : world.vehicles) {
    if (!occupies(v.state, a.lane, cfg.highway) && v.target_lane != a.lane) continue;
    const double rear = v.state.x - 0.5 * v.state.length;
    if (rear < needed) return false;
    if (leader == nullptr || rear < leader->state.x - 0.5 * leader->state.length) leader = &v;
  }
  if (leader == nullptr) return true;
  VehicleState probe;
  probe.x = 0.5 * new_length;
  probe.length = new_length;
  probe.speed = cfg.highway.initial_speed;
  IdmParams p = cfg.idm;
  p.v0 = a.desired_speed;
  return idm_acceleration(probe, &leader->state, p) >= -cfg.mobil.b_safe;
}

}  // namespace

void spawn_vehicles(WorldState& world, const SimConfig& cfg) {
  const HighwayConfig& hw = cfg.highway;
  const FleetParams& fleet = cfg.fleet;
  const double mean = hw.arrival_rate * hw.dt;
  if (mean > 0.0) {
    std::poisson_distribution<int> arrivals(mean);
    const int n = arrivals(world.rng);
    std::uniform_int_distribution<int> lane_pick(0, hw.lane_count - 1);
    std::bernoulli_distribution heavy(hw.heavy_fraction);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      PendingArrival a{};
      a.lane = lane_pick(world.rng);
      const bool is_heavy = heavy(world.rng);
      a.vclass = is_heavy ? VehicleClass::kHeavy : VehicleClass::kLight;
      const double u_mass = unit(world.rng);
      const double u_speed = unit(world.rng);
      if (is_heavy) {
        a.mass = fleet.heavy_mass_min + u_mass * (fleet.heavy_mass_max - fleet.heavy_mass_min);
        a.desired_speed = hw.speed_limit * (fleet.heavy_speed_factor_min +
                                            u_speed * (fleet.heavy_speed_factor_max -
                                                       fleet.heavy_speed_factor_min));
      } else {
        a.mass = fleet.light_mass_min + u_mass * (fleet.light_mass_max - fleet.light_mass_min);
        a.desired_speed = hw.speed_limit * (fleet.light_speed_factor_min +
                                            u_speed * (fleet.light_speed_factor_max -
                                                       fleet.light_speed_factor_min));
      }
      world.pending.push_back(a);
      ++world.arrivals;
    }
  }

  // At most one entry per lane per tick; later arrivals in a blocked lane wait.
  std::vector<PendingArrival> still_pending;
  for (const PendingArrival& a : world.pending) {
    const double length =
        a.vclass == VehicleClass::kHeavy ? fleet.heavy_length : fleet.light_length;
    if (!entry_free(world, a, length, cfg)) {
      still_pending.push_back(a);
      continue;
    }
    Vehicle v;
    v.state = make_vehicle_state(a.vclass, a.mass, 0.5 * length,
                                 hw.lane_center(a.lane), hw.initial_speed, fleet);
    v.lane = a.lane;
    v.controller = Controller::kAmbient;
    v.desired_speed = a.desired_speed;
    v.since_lane_change = 0.0;  // settle in before the first manoeuvre
    world.add(std::move(v));
    ++world.spawned;
    if (a.vclass == VehicleClass::kHeavy) ++world.heavy_spawned;
  }
  world.pending = std::move(still_pending);
}

bool footprints_overlap(const VehicleState& a, const VehicleState& b) {
  struct Box {
    double cx, cy, ux, uy, hl, hw;
  };
  auto box = [](const VehicleState& s) {
    return Box{s.x, s.y, std::cos(s.heading), std::sin(s.heading),
               0.5 * s.length, 0.5 * s.width};
  };
  const Box boxes[2] = {box(a), box(b)};
  auto project = [](const Box& bx, double ax, double ay, double& lo, double& hi) {
    const double c = bx.cx * ax + bx.cy * ay;
    const double r = bx.hl * std::abs(bx.ux * ax + bx.uy * ay) +
                     bx.hw * std::abs(-bx.uy * ax + bx.ux * ay);
    lo = c - r;
    hi = c + r;
  };
  for (const Box& owner : boxes) {
    const double axes[2][2] = {{owner.ux, owner.uy}, {-owner.uy, owner.ux}};
    for (const auto& axis : axes) {
      double lo0, hi0, lo1, hi1;
      project(boxes[0], axis[0], axis[1], lo0, hi0);
      project(boxes[1], axis[0], axis[1], lo1, hi1);
      if (!(std::max(lo0, lo1) < std::min(hi0, hi1))) return false;
    }
  }
  return true;
}

std::vector<std::pair<int, int>> detect_collisions(const WorldState& world) {
  std::vector<const Vehicle*> order;
  order.reserve(world.vehicles.size());
  double max_extent = 0.0;
  for (const Vehicle& v : world.vehicles) {
    order.push_back(&v);
    max_extent = std::max(max_extent, std::hypot(v.state.length, v.state.width));
  }
  std::sort(order.begin(), order.end(), [](const Vehicle* a, const Vehicle* b) {
    return a->state.x < b->state.x || (a->state.x == b->state.x && a->id < b->id);
  });
  std::vector<std::pair<int, int>> hits;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (order[j]->state.x - order[i]->state.x > max_extent) break;
      if (footprints_overlap(order[i]->state, order[j]->state)) {
        hits.emplace_back(std::min(order[i]->id, order[j]->id),
                          std::max(order[i]->id, order[j]->id));
      }
    }
  }
  std::sort(hits.begin(), hits.end());
  return hits;
}

namespace {

struct LaneIndex {
  // Per lane, vehicle indices sorted by x (then id).
  std::vector<std::vector<std::size_t>> lanes;
};

LaneIndex build_lane_index(const WorldState& world, const HighwayConfig& hw) {
  LaneIndex idx;
  idx.lanes.resize(static_cast<std::size_t>(hw.lane_count));
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    const Vehicle& v = world.vehicles[i];
    const auto [lo, hi] = occupied_lanes(v.state, hw);
    for (int l = lo; l <= hi; ++l) idx.lanes[static_cast<std::size_t>(l)].push_back(i);
    // A manoeuvring vehicle already claims its target lane.
    if (v.changing_lane() && (v.target_lane < lo || v.target_lane > hi)) {
      idx.lanes[static_cast<std::size_t>(v.target_lane)].push_back(i);
    }
  }
  for (auto& lane : idx.lanes) {
    std::sort(lane.begin(), lane.end(), [&](std::size_t a, std::size_t b) {
      const Vehicle& va = world.vehicles[a];
      const Vehicle& vb = world.vehicles[b];
      return va.state.x < vb.state.x || (va.state.x == vb.state.x && va.id < vb.id);
    });
  }
  return idx;
}

void claim_lane(LaneIndex& idx, const WorldState& world, int lane, std::size_t i) {
  auto& l = idx.lanes[static_cast<std::size_t>(lane)];
  if (std::find(l.begin(), l.end(), i) != l.end()) return;
  const Vehicle& v = world.vehicles[i];
  auto pos = std::find_if(l.begin(), l.end(), [&](std::size_t j) {
    const Vehicle& o = world.vehicles[j];
    return o.state.x > v.state.x || (o.state.x == v.state.x && o.id > v.id);
  });
  l.insert(pos, i);
}

bool ahead_of(const Vehicle& a, const Vehicle& b) {
  return a.state.x > b.state.x || (a.state.x == b.state.x && a.id > b.id);
}

// Nearest vehicle ahead of / behind `self` in `lane`.
const Vehicle* lane_neighbor(const WorldState& world, const LaneIndex& idx,
                             int lane, const Vehicle& self, bool ahead) {
  const Vehicle* best = nullptr;
  for (std::size_t i : idx.lanes[static_cast<std::size_t>(lane)]) {
    const Vehicle& v = world.vehicles[i];
    if (v.id == self.id) continue;
    if (ahead) {
      if (ahead_of(v, self)) return &v;  // sorted ascending: first is nearest
    } else if (ahead_of(self, v)) {
      best = &v;  // keep the last one behind
    }
  }
  return best;
}

Neighbor as_neighbor(const Vehicle& v, const IdmParams& idm) {
  return {v.state, v.controller == Controller::kEgo ? idm.v0 : v.desired_speed};
}

LaneNeighbors lane_neighbors(const WorldState& world, const LaneIndex& idx,
                             int lane, const Vehicle& self, const SimConfig& cfg) {
  LaneNeighbors out;
  if (lane < 0 || lane >= cfg.highway.lane_count) return out;
  out.exists = true;
  if (const Vehicle* l = lane_neighbor(world, idx, lane, self, true)) {
    out.leader = as_neighbor(*l, cfg.idm);
  }
  if (const Vehicle* f = lane_neighbor(world, idx, lane, self, false)) {
    out.follower = as_neighbor(*f, cfg.idm);
  }
  return out;
}

struct AmbientDecision {
  double a_long = 0.0;
  LaneDecision lane = LaneDecision::kStay;
};

AmbientDecision decide(const WorldState& world, const LaneIndex& idx,
                       const Vehicle& self, const SimConfig& cfg) {
  AmbientDecision d;
  IdmParams p = cfg.idm;
  p.v0 = self.desired_speed;
  // Leader: nearest ahead in any lane the footprint touches.
  const VehicleState* leader = nullptr;
  double best_gap = std::numeric_limits<double>::infinity();
  const auto [lo, hi] = occupied_lanes(self.state, cfg.highway);
  for (int l = lo; l <= hi; ++l) {
    if (const Vehicle* v = lane_neighbor(world, idx, l, self, true)) {
      const double gap = bumper_gap(self.state, v->state);
      if (gap < best_gap) {
        best_gap = gap;
        leader = &v->state;
      }
    }
  }
  if (leader != nullptr && !(best_gap > 0.0)) {
    d.a_long = -cfg.fleet.emergency_decel;
  } else {
    d.a_long = std::max(-cfg.fleet.emergency_decel,
                        idm_acceleration(self.state, leader, p));
  }

  if (!self.changing_lane() && self.since_lane_change >= cfg.mobil.cooldown) {
    const Neighbor subject{self.state, self.desired_speed};
    MobilNeighbors n;
    n.current = lane_neighbors(world, idx, self.lane, self, cfg);
    n.left = lane_neighbors(world, idx, self.lane + 1, self, cfg);
    n.right = lane_neighbors(world, idx, self.lane - 1, self, cfg);
    d.lane = mobil_lane_change(subject, n, cfg.idm, cfg.mobil);
  }
  return d;
}

void contain_on_road(VehicleState& s, const HighwayConfig& hw) {
  const double lo = 0.5 * s.width;
  const double hi = hw.road_width() - 0.5 * s.width;
  const double v_lat = s.v_lat();
  if (s.y < lo) {
    s.y = lo;
    if (v_lat < 0.0) set_velocity(s, s.v_long(), 0.0);
  } else if (s.y > hi) {
    s.y = hi;
    if (v_lat > 0.0) set_velocity(s, s.v_long(), 0.0);
  }
}

double ramp_fraction(double s) {
  return 0.5 * (1.0 - std::cos(std::numbers::pi * s));
}

double ramp_rate(double s, double span, double duration) {
  return span * std::numbers::pi / (2.0 * duration) * std::sin(std::numbers::pi * s);
}

}  // namespace

StepEvents world_step(WorldState& world, const SimConfig& cfg,
                      const EgoControls& ego_controls) {
  const HighwayConfig& hw = cfg.highway;
  const double dt = hw.dt;
  StepEvents events;

  // (1) ambient decisions against the current snapshot.
  // Decisions run in id order; a lane change claims its target lane at once
  // so later vehicles in the same tick cannot pick the same gap.
  LaneIndex idx = build_lane_index(world, hw);
  std::vector<AmbientDecision> decisions(world.vehicles.size());
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    const Vehicle& v = world.vehicles[i];
    if (v.controller == Controller::kAmbient) {
      decisions[i] = decide(world, idx, v, cfg);
      if (decisions[i].lane != LaneDecision::kStay) {
        claim_lane(idx, world, v.lane + (decisions[i].lane == LaneDecision::kLeft ? 1 : -1), i);
      }
    }
  }

  // (2) kinematics.
  for (std::size_t i = 0; i < world.vehicles.size(); ++i) {
    Vehicle& v = world.vehicles[i];
    if (v.controller == Controller::kEgo) {
      v.state = step_kinematics(v.state, ego_controls.a_long, ego_controls.a_lat, dt);
      if (hw.contain_ego) contain_on_road(v.state, hw);
      const int lane = hw.lane_of(v.state.y);
      if (lane != v.lane) events.lane_changes.push_back({v.id, v.lane, lane});
      v.lane = lane;
      continue;
    }
    const AmbientDecision& d = decisions[i];
    if (d.lane != LaneDecision::kStay) {
      v.source_lane = v.lane;
      v.target_lane = v.lane + (d.lane == LaneDecision::kLeft ? 1 : -1);
      v.lc_elapsed = 0.0;
      v.lc_from_y = v.state.y;
      v.since_lane_change = 0.0;
    }
    const LongitudinalUpdate lon = integrate_floored(std::max(0.0, v.state.v_long()),
                                                     d.a_long, dt);
    v.state.x += lon.dx;
    double v_lat = 0.0;
    if (v.changing_lane()) {
      const double to_y = hw.lane_center(v.target_lane);
      const double span = to_y - v.lc_from_y;
      v.lc_elapsed += dt;
      const double s = std::min(1.0, v.lc_elapsed / cfg.mobil.duration);
      if (s >= 1.0) {
        v.state.y = to_y;
        events.lane_changes.push_back({v.id, v.source_lane, v.target_lane});
        v.target_lane = -1;
        v.source_lane = -1;
      } else {
        v.state.y = v.lc_from_y + span * ramp_fraction(s);
        v_lat = ramp_rate(s, span, cfg.mobil.duration);
      }
    } else {
      v.since_lane_change += dt;
    }
    set_velocity(v.state, lon.v, v_lat);
    v.state.acceleration = d.a_long;
    v.lane = hw.lane_of(v.state.y);
  }
  world.time += dt;

  // (3) despawn ambient vehicles past the road end.
  std::erase_if(world.vehicles, [&](const Vehicle& v) {
    if (v.controller == Controller::kAmbient && v.state.x > hw.length) {
      events.despawned.push_back(v.id);
      return true;
    }
    return false;
  });

  // (4) spawn, (5) collision scan.
  spawn_vehicles(world, cfg);
  events.collisions = detect_collisions(world);
  return events;
}

}  // namespace hwrisk
