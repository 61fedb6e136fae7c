#include "hwrisk/riskfield.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>

#include "hwrisk/errors.hpp"

namespace hwrisk {

double VehicleState::v_long() const { return speed * std::cos(heading); }
double VehicleState::v_lat() const { return speed * std::sin(heading); }

bool VehicleState::valid() const {
  return mass > 0.0 && length > 0.0 && width > 0.0 && speed >= 0.0 &&
         std::isfinite(x) && std::isfinite(y) && std::isfinite(speed) &&
         std::isfinite(heading) && std::isfinite(acceleration);
}

void RiskFieldParams::validate() const {
  if (!(t_light > 0.0 && t_heavy > 0.0 && lambda_field > 0.0 && tau > 0.0)) {
    throw ConfigError("risk field T, lambda and tau must be positive");
  }
  if (!(std::isfinite(beta1) && std::isfinite(beta2) && std::isfinite(beta3))) {
    throw ConfigError("risk field betas must be finite");
  }
}

double speed_term(double speed) {
  return RiskFieldParams::kSpeedCoeff *
             std::pow(speed, RiskFieldParams::kSpeedExp) +
         RiskFieldParams::kSpeedOffset;
}

namespace {

double normalize_angle(double a) {
  constexpr double kPi = std::numbers::pi;
  a = std::remainder(a, 2.0 * kPi);  // [-pi, pi]
  if (a <= -kPi) a += 2.0 * kPi;
  return a;
}

}  // namespace

double clockwise_angle(double ax, double ay, double bx, double by) {
  if ((ax == 0.0 && ay == 0.0) || (bx == 0.0 && by == 0.0)) return 0.0;
  const double cross = ax * by - ay * bx;
  const double dot = ax * bx + ay * by;
  // atan2 gives the counterclockwise rotation from a to b.
  return normalize_angle(-std::atan2(cross, dot));
}

PairAngles angles_between(const VehicleState& sv, const VehicleState& ov) {
  PairAngles out;
  out.theta = clockwise_angle(sv.v_long(), sv.v_lat(), ov.v_long(), ov.v_lat());
  // Accelerations act along the heading axis; the sign lives in the scalar.
  out.gamma = clockwise_angle(std::cos(sv.heading), std::sin(sv.heading),
                              std::cos(ov.heading), std::sin(ov.heading));
  out.alpha = clockwise_angle(1.0, 0.0, ov.x - sv.x, ov.y - sv.y);
  return out;
}

namespace {

struct PseudoVector {
  double kx;
  double ky;
  double norm;
};

PseudoVector pseudo_vector(const VehicleState& sv, const VehicleState& ov,
                           const RiskFieldParams& params) {
  const double kx =
      (ov.x - sv.x) * params.tau / std::exp(params.warp() * sv.speed);
  const double ky = (ov.y - sv.y) * params.tau;
  return {kx, ky, std::hypot(kx, ky)};
}

}  // namespace

double pseudo_distance(const VehicleState& sv, const VehicleState& ov,
                       const RiskFieldParams& params) {
  return pseudo_vector(sv, ov, params).norm;
}

FieldForce kinetic_field_strength(const VehicleState& sv,
                                  const VehicleState& ov,
                                  const RiskFieldParams& params) {
  const PseudoVector k = pseudo_vector(sv, ov, params);
  if (k.norm == 0.0) {
    throw SingularPosition("SV and OV positions coincide");
  }
  const PairAngles ang = angles_between(sv, ov);
  const double magnitude = params.weight_correction(sv.vclass) * sv.mass *
                           speed_term(sv.speed) * params.lambda_field *
                           std::exp(-params.beta1 * sv.acceleration *
                                    std::cos(ang.alpha)) /
                           k.norm;
  return {magnitude * k.kx / k.norm, magnitude * k.ky / k.norm, magnitude};
}

FieldForce field_force(const VehicleState& sv, const VehicleState& ov,
                       const RiskFieldParams& params) {
  const FieldForce e = kinetic_field_strength(sv, ov, params);
  const PairAngles ang = angles_between(sv, ov);
  const double speed_gap = ov.speed * std::cos(ang.theta) - sv.speed;
  const double accel_gap = ov.acceleration * std::cos(ang.gamma) - sv.acceleration;
  const double exponent =
      -(params.beta2 * speed_gap + params.beta3 * accel_gap) * std::cos(ang.alpha);
  const double term_speed =
      params.force_speed_term_uses_ov ? ov.speed : sv.speed;
  const double scale = params.weight_correction(ov.vclass) * ov.mass *
                       speed_term(term_speed) * std::exp(exponent);
  return {scale * e.fx, scale * e.fy, scale * e.magnitude};
}

double adr(const VehicleState& ov, std::span<const VehicleState> svs,
           const RiskFieldParams& params) {
  double total = 0.0;
  for (const VehicleState& sv : svs) {
    total += field_force(sv, ov, params).magnitude;
  }
  return total;
}

namespace {

std::size_t node_count(double lo, double hi, double step) {
  return static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
}

}  // namespace

std::vector<GridCell> field_grid_export(const VehicleState& sv,
                                        const RiskFieldParams& params,
                                        const GridSpec& grid,
                                        const VehicleState& probe) {
  if (!(grid.step > 0.0) || !std::isfinite(grid.step)) {
    throw InvalidGrid("step must be positive, got " + std::to_string(grid.step));
  }
  if (grid.x_max < grid.x_min || grid.y_max < grid.y_min) {
    throw InvalidGrid("empty grid range");
  }
  const std::size_t nx = node_count(grid.x_min, grid.x_max, grid.step);
  const std::size_t ny = node_count(grid.y_min, grid.y_max, grid.step);
  std::vector<GridCell> cells;
  cells.reserve(nx * ny);
  VehicleState ov = probe;
  for (std::size_t j = 0; j < ny; ++j) {
    const double y = grid.y_min + static_cast<double>(j) * grid.step;
    for (std::size_t i = 0; i < nx; ++i) {
      const double x = grid.x_min + static_cast<double>(i) * grid.step;
      ov.x = sv.x + x;
      ov.y = sv.y + y;
      double force = std::numeric_limits<double>::infinity();
      if (pseudo_distance(sv, ov, params) > 0.0) {
        force = field_force(sv, ov, params).magnitude;
      }
      cells.push_back({x, y, force});
    }
  }
  return cells;
}

void write_grid_csv(std::ostream& out, std::span<const GridCell> cells) {
  const auto old_precision = out.precision();
  out << "x,y,force\n" << std::setprecision(17);
  for (const GridCell& c : cells) {
    out << c.x << ',' << c.y << ',';
    if (std::isinf(c.force)) {
      out << "inf";
    } else {
      out << c.force;
    }
    out << '\n';
  }
  out.precision(old_precision);
}

}  // namespace hwrisk
