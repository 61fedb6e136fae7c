#pragma once

#include <string>
#include <vector>

#include "hwrisk/riskfield.hpp"

namespace hwrisk {

// One row of the trajectory CSV.
struct TrajectoryRecord {
  int frame = 0;
  int vehicle_id = 0;
  double x = 0.0;
  double y = 0.0;
  double v_x = 0.0;
  double v_y = 0.0;
  double a_x = 0.0;
  double a_y = 0.0;
  int lane = 0;
  VehicleClass vclass = VehicleClass::kLight;
  double mass = 0.0;
  double length = 0.0;
  double width = 0.0;

  bool operator==(const TrajectoryRecord&) const = default;
};

TrajectoryRecord to_record(int frame, int vehicle_id, int lane,
                           const VehicleState& s);
VehicleState to_state(const TrajectoryRecord& r);

// All vehicles logged at one instant.
struct Frame {
  int frame = 0;
  std::vector<TrajectoryRecord> vehicles;  // ordered by vehicle_id

  const TrajectoryRecord* find(int vehicle_id) const;
};

// Frame sequence of one episode seen from a subject vehicle.
struct EpisodeLog {
  double dt = 0.1;
  int subject_id = 0;
  std::vector<Frame> frames;
  bool complete = false;
};

const char* vclass_name(VehicleClass c);

}  // namespace hwrisk
