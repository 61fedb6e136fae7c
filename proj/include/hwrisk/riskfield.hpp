#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace hwrisk {

enum class VehicleClass { kLight, kHeavy };

// Planar state of one vehicle. x runs along the lane axis, y is lateral and
// positive to the left. heading is atan2(v_lat, v_long), i.e. measured
// counterclockwise from the lane axis; pair angles derived from it are
// converted to the clockwise-positive convention in angles_between().
struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double speed = 0.0;
  double heading = 0.0;
  double acceleration = 0.0;  // signed, along heading
  double mass = 1500.0;
  VehicleClass vclass = VehicleClass::kLight;
  double length = 4.5;
  double width = 1.8;

  double v_long() const;
  double v_lat() const;
  bool valid() const;
};

struct RiskFieldParams {
  double t_light = 1.0;
  double t_heavy = 0.6;
  double beta1 = 0.05;
  double beta2 = 0.05;
  double beta3 = 0.05;
  double lambda_field = 1.0;
  double tau = 0.2;
  // Coefficient of the speed-dependent longitudinal warp in the pseudo
  // distance. Negative means "use tau".
  double warp_coeff = -1.0;
  // Non-default: evaluate the field-force speed term with the OV speed
  // instead of the SV speed.
  bool force_speed_term_uses_ov = false;

  static constexpr double kSpeedCoeff = 1.566e-14;
  static constexpr double kSpeedExp = 6.687;
  static constexpr double kSpeedOffset = 0.3345;

  double warp() const { return warp_coeff < 0.0 ? tau : warp_coeff; }
  double weight_correction(VehicleClass c) const {
    return c == VehicleClass::kHeavy ? t_heavy : t_light;
  }
  void validate() const;
};

struct FieldForce {
  double fx = 0.0;
  double fy = 0.0;
  double magnitude = 0.0;
};

struct PairAngles {
  double theta = 0.0;  // velocity directions
  double gamma = 0.0;  // acceleration axes
  double alpha = 0.0;  // SV->OV centre line vs lane axis
};

// Speed amplification term 1.566e-14 * v^6.687 + 0.3345.
double speed_term(double speed);

// Clockwise angle from direction (ax, ay) to (bx, by), in (-pi, pi].
// Zero-length inputs give 0.
double clockwise_angle(double ax, double ay, double bx, double by);

PairAngles angles_between(const VehicleState& sv, const VehicleState& ov);

double pseudo_distance(const VehicleState& sv, const VehicleState& ov,
                       const RiskFieldParams& params);

// Kinetic field strength emitted by sv and evaluated at ov.
FieldForce kinetic_field_strength(const VehicleState& sv,
                                  const VehicleState& ov,
                                  const RiskFieldParams& params);

// Field force the field of sv exerts on ov.
FieldForce field_force(const VehicleState& sv, const VehicleState& ov,
                       const RiskFieldParams& params);

// Anticipated driving risk: sum of field-force magnitudes on ov.
double adr(const VehicleState& ov, std::span<const VehicleState> svs,
           const RiskFieldParams& params);

struct GridSpec {
  double x_min = -50.0;
  double x_max = 50.0;
  double y_min = -10.0;
  double y_max = 10.0;
  double step = 0.5;
};

struct GridCell {
  double x;
  double y;
  double force;  // +inf at the singular cell
};

// Places probe at every grid node (relative to the SV position) and records
// |field_force|. Rows are emitted with y as the outer loop.
std::vector<GridCell> field_grid_export(const VehicleState& sv,
                                        const RiskFieldParams& params,
                                        const GridSpec& grid,
                                        const VehicleState& probe);

void write_grid_csv(std::ostream& out, std::span<const GridCell> cells);

}  // namespace hwrisk
