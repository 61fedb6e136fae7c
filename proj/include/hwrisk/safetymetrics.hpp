#pragma once

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "hwrisk/envmdp.hpp"
#include "hwrisk/riskfield.hpp"
#include "hwrisk/trajectory.hpp"

namespace hwrisk {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct MetricThresholds {
  double ttc = 3.0;   // s, flagged strictly below
  double drac = 3.0;  // m/s^2, flagged strictly above
  double pet = 2.0;   // s, flagged strictly below
};

// Bit set of the measures that fired.
enum Trigger : unsigned { kTriggerTtc = 1u, kTriggerDrac = 2u, kTriggerPet = 4u };
using TriggerSet = unsigned;
std::string trigger_string(TriggerSet t);  // e.g. "TTC|DRAC"

// Scalar forms: gap is the bumper-to-bumper distance.
double ttc(double gap, double v_follower, double v_leader);
double drac(double gap, double v_follower, double v_leader);
double ttc(const VehicleState& leader, const VehicleState& follower);
double drac(const VehicleState& leader, const VehicleState& follower);

// Longitudinal footprint [lo, hi] of one vehicle at time t; inside=false when
// the vehicle is not in the conflict area's lane (or not observed).
struct OccupancySample {
  double t = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  bool inside = true;
};

struct ConflictArea {
  double lo = 0.0;
  double hi = 0.0;
};

// Time from the first vehicle's footprint leaving the area to the second's
// entering it. Infinite when either never occupies the area, 0 when their
// occupancy overlaps.
double pet(std::span<const OccupancySample> first, std::span<const OccupancySample> second,
           const ConflictArea& area);

struct PairMeasures {
  double ttc = kInf;
  double drac = 0.0;
  double pet = kInf;
};

struct ConflictFlag {
  bool flagged = false;
  TriggerSet trigger = 0;
};

ConflictFlag conflict_flag(const PairMeasures& m, const MetricThresholds& th = {});

struct PceParty {
  double mass = 0.0;   // kg
  double speed = 0.0;  // m/s
};

double pce(const PceParty& follower, const PceParty& leader, double alpha_f = 1.0,
           double alpha_l = 1.0);

struct PairSample {
  PairMeasures measures;
  PceParty follower;
  PceParty leader;
};

// Sum over steps and pairs of flag * PCE. timeline[t] holds the pairs of step t.
double pcec(const std::vector<std::vector<PairSample>>& timeline, const MetricThresholds& th = {});

struct ConflictEvent {
  double time = 0.0;  // start of the flagged run
  int vehicle_a = 0;  // subject
  int vehicle_b = 0;
  TriggerSet trigger = 0;
  bool heavy_involved = false;
  double pce = 0.0;  // summed over the run's steps
};

struct EpisodeReport {
  double avg_speed = 0.0;
  int lane_changes = 0;
  int collisions = 0;
  int conflicts = 0;
  int heavy_in_conflicts = 0;
  int light_in_conflicts = 0;
  double pcec = 0.0;
  double mean_adr = 0.0;

  bool operator==(const EpisodeReport&) const = default;
};

struct MetricsConfig {
  MetricThresholds thresholds;
  RiskFieldParams risk;
  int lane_count = 3;
  double lane_width = 3.5;
  double perception_range = 50.0;
};

MetricsConfig metrics_config(const EnvConfig& env, const MetricThresholds& th = {});

struct EpisodeAnalysis {
  EpisodeReport report;
  std::vector<ConflictEvent> events;
};

// Aggregates a complete log from the subject's point of view. Only pairs that
// include the subject are assessed.
EpisodeAnalysis analyze_episode(const EpisodeLog& log, const MetricsConfig& cfg);
EpisodeReport episode_report(const EpisodeLog& log, const MetricsConfig& cfg);

void write_report_header(std::ostream& out);
void write_report_row(std::ostream& out, int episode, const EpisodeReport& r);
void write_event_header(std::ostream& out);
void write_event_rows(std::ostream& out, int episode, std::span<const ConflictEvent> events);

}  // namespace hwrisk
