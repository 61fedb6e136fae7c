#include "hwrisk/safetymetrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>

#include "hwrisk/errors.hpp"
#include "hwrisk/simworld.hpp"

namespace hwrisk {

std::string trigger_string(TriggerSet t) {
  std::string s;
  auto add = [&](const char* name) {
    if (!s.empty()) s += '|';
    s += name;
  };
  if (t & kTriggerTtc) add("TTC");
  if (t & kTriggerDrac) add("DRAC");
  if (t & kTriggerPet) add("PET");
  return s;
}

double ttc(double gap, double v_follower, double v_leader) {
  if (gap < 0.0) throw NegativeGap("bumper gap " + std::to_string(gap));
  const double closing = v_follower - v_leader;
  if (closing <= 0.0) return kInf;
  return gap / closing;
}

double drac(double gap, double v_follower, double v_leader) {
  if (gap < 0.0) throw NegativeGap("bumper gap " + std::to_string(gap));
  const double closing = v_follower - v_leader;
  if (closing <= 0.0) return 0.0;
  if (gap == 0.0) return kInf;
  return closing * closing / (2.0 * gap);
}

double ttc(const VehicleState& leader, const VehicleState& follower) {
  return ttc(bumper_gap(follower, leader), follower.v_long(), leader.v_long());
}

double drac(const VehicleState& leader, const VehicleState& follower) {
  return drac(bumper_gap(follower, leader), follower.v_long(), leader.v_long());
}

namespace {

bool occupies(const OccupancySample& s, const ConflictArea& a) {
  return s.inside && s.lo < a.hi && s.hi > a.lo;
}

}  // namespace

double pet(std::span<const OccupancySample> first, std::span<const OccupancySample> second,
           const ConflictArea& area) {
  std::size_t i0 = 0;
  while (i0 < first.size() && !occupies(first[i0], area)) ++i0;
  if (i0 == first.size()) return kInf;
  std::size_t i1 = i0;
  while (i1 < first.size() && occupies(first[i1], area)) ++i1;
  const double enter_first = first[i0].t;
  const double exit_first = i1 < first.size() ? first[i1].t : kInf;

  for (const OccupancySample& s : second) {
    if (s.t < enter_first || !occupies(s, area)) continue;
    return s.t < exit_first ? 0.0 : s.t - exit_first;
  }
  return kInf;
}

ConflictFlag conflict_flag(const PairMeasures& m, const MetricThresholds& th) {
  ConflictFlag f;
  if (m.ttc < th.ttc) f.trigger |= kTriggerTtc;
  if (m.drac > th.drac) f.trigger |= kTriggerDrac;
  if (m.pet < th.pet) f.trigger |= kTriggerPet;
  f.flagged = f.trigger != 0;
  return f;
}

double pce(const PceParty& follower, const PceParty& leader, double alpha_f, double alpha_l) {
  const double ef = follower.mass * follower.speed * follower.speed;
  const double el = leader.mass * leader.speed * leader.speed;
  if (ef - el > 0.0) return 0.5 * alpha_l * alpha_f * (ef - el);
  return 0.5 * alpha_l * alpha_f * ef;
}

double pcec(const std::vector<std::vector<PairSample>>& timeline, const MetricThresholds& th) {
  double total = 0.0;
  for (const auto& step : timeline) {
    for (const PairSample& p : step) {
      if (conflict_flag(p.measures, th).flagged) total += pce(p.follower, p.leader);
    }
  }
  return total;
}

MetricsConfig metrics_config(const EnvConfig& env, const MetricThresholds& th) {
  MetricsConfig m;
  m.thresholds = th;
  m.risk = env.risk;
  m.lane_count = env.sim.highway.lane_count;
  m.lane_width = env.sim.highway.lane_width;
  m.perception_range = env.perception_range;
  return m;
}

namespace {

struct StepPair {
  PairMeasures measures;
  PceParty follower;
  PceParty leader;
  bool heavy = false;
};

PceParty party_of(const TrajectoryRecord& r) { return {r.mass, std::hypot(r.v_x, r.v_y)}; }

std::vector<SceneVehicle> scene_of(const Frame& f) {
  std::vector<SceneVehicle> out;
  out.reserve(f.vehicles.size());
  for (const TrajectoryRecord& r : f.vehicles) out.push_back({r.vehicle_id, r.lane, to_state(r)});
  return out;
}

// Lane-merge PET for every (merger, other) pair involving the subject,
// keyed by frame index then other vehicle id.
std::vector<std::map<int, double>> merge_pets(const EpisodeLog& log) {
  const std::size_t n = log.frames.size();
  std::vector<std::map<int, double>> out(n);
  auto occupancy = [&](int id, int lane) {
    std::vector<OccupancySample> s(n);
    for (std::size_t t = 0; t < n; ++t) {
      s[t].t = log.frames[t].frame * log.dt;
      const TrajectoryRecord* r = log.frames[t].find(id);
      s[t].inside = r != nullptr && r->lane == lane;
      if (r != nullptr) {
        s[t].lo = r->x - 0.5 * r->length;
        s[t].hi = r->x + 0.5 * r->length;
      }
    }
    return s;
  };
  auto assess = [&](std::size_t t, const TrajectoryRecord& merger, const TrajectoryRecord& other,
                    int other_id) {
    const ConflictArea area{merger.x - 0.5 * merger.length, merger.x + 0.5 * merger.length};
    const auto m = occupancy(merger.vehicle_id, merger.lane);
    const auto o = occupancy(other.vehicle_id, merger.lane);
    const double value = other.x > merger.x ? pet(o, m, area) : pet(m, o, area);
    auto [it, inserted] = out[t].try_emplace(other_id, value);
    if (!inserted) it->second = std::min(it->second, value);
  };

  for (std::size_t t = 1; t < n; ++t) {
    const Frame& prev = log.frames[t - 1];
    const Frame& cur = log.frames[t];
    const TrajectoryRecord* ego = cur.find(log.subject_id);
    if (ego == nullptr) continue;
    for (const TrajectoryRecord& r : cur.vehicles) {
      const TrajectoryRecord* before = prev.find(r.vehicle_id);
      if (before == nullptr || before->lane == r.lane) continue;
      if (r.vehicle_id == log.subject_id) {
        // Nearest vehicles ahead and behind in the entered lane.
        const TrajectoryRecord* lead = nullptr;
        const TrajectoryRecord* follow = nullptr;
        for (const TrajectoryRecord& o : cur.vehicles) {
          if (o.vehicle_id == r.vehicle_id || o.lane != r.lane) continue;
          if (o.x > r.x) {
            if (lead == nullptr || o.x < lead->x) lead = &o;
          } else if (follow == nullptr || o.x > follow->x) {
            follow = &o;
          }
        }
        if (lead != nullptr) assess(t, r, *lead, lead->vehicle_id);
        if (follow != nullptr) assess(t, r, *follow, follow->vehicle_id);
      } else if (r.lane == ego->lane) {
        assess(t, r, *ego, r.vehicle_id);
      }
    }
  }
  return out;
}

bool off_road(const TrajectoryRecord& r, const MetricsConfig& cfg) {
  return r.y < 0.0 || r.y > cfg.lane_count * cfg.lane_width;
}

}  // namespace

EpisodeAnalysis analyze_episode(const EpisodeLog& log, const MetricsConfig& cfg) {
  if (!log.complete || log.frames.empty()) throw IncompleteLog("episode log is not complete");
  for (const Frame& f : log.frames) {
    if (f.find(log.subject_id) == nullptr) {
      throw IncompleteLog("subject " + std::to_string(log.subject_id) + " missing from frame " +
                          std::to_string(f.frame));
    }
  }
  const auto pets = merge_pets(log);
  EpisodeAnalysis out;
  EpisodeReport& rep = out.report;

  double speed_sum = 0.0;
  double adr_sum = 0.0;
  bool colliding = false;
  int prev_lane = 0;
  // Open conflict run per other vehicle.
  std::map<int, ConflictEvent> open;
  std::map<int, std::size_t> last_flagged;

  for (std::size_t t = 0; t < log.frames.size(); ++t) {
    const Frame& frame = log.frames[t];
    const double time = frame.frame * log.dt;
    const TrajectoryRecord& ego_rec = *frame.find(log.subject_id);
    const VehicleState ego_state = to_state(ego_rec);
    speed_sum += ego_rec.v_x;
    if (t > 0 && ego_rec.lane != prev_lane) ++rep.lane_changes;
    prev_lane = ego_rec.lane;

    const std::vector<SceneVehicle> scene = scene_of(frame);
    const SceneVehicle ego{ego_rec.vehicle_id, ego_rec.lane, ego_state};

    bool hit = off_road(ego_rec, cfg);
    for (const SceneVehicle& o : scene) {
      if (o.id != ego.id && footprints_overlap(ego_state, o.state)) hit = true;
    }
    if (hit && !colliding) ++rep.collisions;
    colliding = hit;

    const auto slots = select_surrounding(ego, scene, cfg.lane_count, cfg.perception_range);
    std::vector<VehicleState> svs;
    for (int idx : slots) {
      if (idx >= 0) svs.push_back(scene[static_cast<std::size_t>(idx)].state);
    }
    adr_sum += adr(ego_state, svs, cfg.risk);

    std::map<int, StepPair> pairs;
    auto pair_for = [&](const TrajectoryRecord& other) -> StepPair& {
      auto [it, inserted] = pairs.try_emplace(other.vehicle_id);
      if (inserted) {
        const bool other_ahead =
            other.x > ego_rec.x || (other.x == ego_rec.x && other.vehicle_id > ego_rec.vehicle_id);
        it->second.follower = party_of(other_ahead ? ego_rec : other);
        it->second.leader = party_of(other_ahead ? other : ego_rec);
        it->second.heavy = other.vclass == VehicleClass::kHeavy;
      }
      return it->second;
    };

    const auto near = select_surrounding(ego, scene, cfg.lane_count, kInf);
    for (Slot s : {Slot::kSameLead, Slot::kSameFollow}) {
      const int idx = near[static_cast<std::size_t>(s)];
      if (idx < 0) continue;
      const SceneVehicle& o = scene[static_cast<std::size_t>(idx)];
      const bool lead = s == Slot::kSameLead;
      const VehicleState& l = lead ? o.state : ego_state;
      const VehicleState& f = lead ? ego_state : o.state;
      const double gap = bumper_gap(f, l);
      if (gap < 0.0) continue;  // overlapping: a collision, not a conflict
      StepPair& p = pair_for(*frame.find(o.id));
      p.measures.ttc = ttc(gap, f.v_long(), l.v_long());
      p.measures.drac = drac(gap, f.v_long(), l.v_long());
    }
    for (const auto& [id, value] : pets[t]) {
      const TrajectoryRecord* other = frame.find(id);
      if (other != nullptr) pair_for(*other).measures.pet = value;
    }

    for (const auto& [id, p] : pairs) {
      const ConflictFlag flag = conflict_flag(p.measures, cfg.thresholds);
      if (!flag.flagged) continue;
      const double e = pce(p.follower, p.leader);
      rep.pcec += e;
      auto it = open.find(id);
      if (it != open.end() && last_flagged[id] + 1 == t) {
        it->second.trigger |= flag.trigger;
        it->second.pce += e;
      } else {
        if (it != open.end()) out.events.push_back(it->second);
        open[id] = ConflictEvent{time, log.subject_id, id, flag.trigger, p.heavy, e};
      }
      last_flagged[id] = t;
    }
  }
  for (const auto& [id, ev] : open) out.events.push_back(ev);
  std::sort(out.events.begin(), out.events.end(), [](const ConflictEvent& a, const ConflictEvent& b) {
    return a.time != b.time ? a.time < b.time : a.vehicle_b < b.vehicle_b;
  });

  const double n = static_cast<double>(log.frames.size());
  rep.avg_speed = speed_sum / n;
  rep.mean_adr = adr_sum / n;
  rep.conflicts = static_cast<int>(out.events.size());
  for (const ConflictEvent& ev : out.events) {
    (ev.heavy_involved ? rep.heavy_in_conflicts : rep.light_in_conflicts) += 1;
  }
  return out;
}

EpisodeReport episode_report(const EpisodeLog& log, const MetricsConfig& cfg) {
  return analyze_episode(log, cfg).report;
}

void write_report_header(std::ostream& out) {
  out << "episode,avg_speed,lane_changes,collisions,conflicts,heavy_in_conflicts,"
         "light_in_conflicts,pcec_joules,mean_adr\n";
}

void write_report_row(std::ostream& out, int episode, const EpisodeReport& r) {
  const auto p = out.precision(17);
  out << episode << ',' << r.avg_speed << ',' << r.lane_changes << ',' << r.collisions << ','
      << r.conflicts << ',' << r.heavy_in_conflicts << ',' << r.light_in_conflicts << ','
      << r.pcec << ',' << r.mean_adr << '\n';
  out.precision(p);
}

void write_event_header(std::ostream& out) {
  out << "episode,time,vehicle_a,vehicle_b,trigger,heavy_involved,pce_joules\n";
}

void write_event_rows(std::ostream& out, int episode, std::span<const ConflictEvent> events) {
  const auto p = out.precision(17);
  for (const ConflictEvent& e : events) {
    out << episode << ',' << e.time << ',' << e.vehicle_a << ',' << e.vehicle_b << ','
        << trigger_string(e.trigger) << ',' << (e.heavy_involved ? 1 : 0) << ',' << e.pce << '\n';
  }
  out.precision(p);
}

}  // namespace hwrisk
