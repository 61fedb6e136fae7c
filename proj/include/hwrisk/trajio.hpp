#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "hwrisk/safetymetrics.hpp"
#include "hwrisk/trajectory.hpp"

namespace hwrisk {

inline constexpr double kDefaultFrameRate = 25.0;
inline constexpr double kImputedLightMass = 1500.0;
inline constexpr double kImputedHeavyMass = 25000.0;

struct ParsedTrajectory {
  std::vector<TrajectoryRecord> records;
  double frame_rate = kDefaultFrameRate;  // from a "# frame_rate: N" line
  bool mass_imputed = false;              // the mass column was absent
};

// Columns may appear in any order; mass is optional, everything else is
// required. Numbers are parsed locale-independently.
ParsedTrajectory parse_trajectory_csv(std::istream& in);
ParsedTrajectory parse_trajectory_csv(const std::filesystem::path& path);

void write_trajectory_csv(std::ostream& out, std::span<const TrajectoryRecord> records,
                          double frame_rate);
void write_trajectory_csv(const std::filesystem::path& path,
                          std::span<const TrajectoryRecord> records, double frame_rate);

std::vector<TrajectoryRecord> flatten_log(const EpisodeLog& log);

// Linear interpolation of each vehicle's track onto frames of length dt.
// Discrete fields come from the earlier sample; tracks are not bridged
// across missing frames. A no-op when frame_rate * dt == 1.
std::vector<TrajectoryRecord> resample(std::span<const TrajectoryRecord> records,
                                       double frame_rate, double dt);

// Frames containing the subject, with every vehicle logged in them.
EpisodeLog log_for_subject(std::span<const TrajectoryRecord> records, int subject_id, double dt);

EpisodeAnalysis replay_evaluate(std::span<const TrajectoryRecord> records, int subject_id,
                                const MetricsConfig& cfg, double dt);

}  // namespace hwrisk
