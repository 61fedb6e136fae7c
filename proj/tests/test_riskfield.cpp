#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "hwrisk/errors.hpp"
#include "hwrisk/riskfield.hpp"
#include "oracles.hpp"

using namespace hwrisk;

namespace {

VehicleState at(double x, double y, double speed = 0.0, double heading = 0.0, double accel = 0.0,
                double mass = 1500.0) {
  VehicleState s;
  s.x = x;
  s.y = y;
  s.speed = speed;
  s.heading = heading;
  s.acceleration = accel;
  s.mass = mass;
  return s;
}

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

}  // namespace

TEST_CASE("pair angles follow the clockwise-positive convention") {
  const double pi = std::numbers::pi;
  auto a = angles_between(at(0, 0, 10), at(10, 0, 10));
  CHECK(a.theta == 0.0);
  CHECK(a.gamma == 0.0);
  CHECK(a.alpha == 0.0);

  a = angles_between(at(0, 0, 10), at(10, 0, 10, pi / 2));
  CHECK(a.theta == doctest::Approx(-pi / 2).epsilon(1e-15));
  CHECK(a.alpha == 0.0);

  a = angles_between(at(0, 0, 10), at(10, 10, 10));
  CHECK(a.alpha == doctest::Approx(-pi / 4).epsilon(1e-15));

  // Behind the SV the centre line points backwards.
  CHECK(angles_between(at(0, 0), at(-5, 0)).alpha == doctest::Approx(pi));
  // Zero-length velocity maps to angle 0.
  CHECK(angles_between(at(0, 0, 0.0), at(5, 0, 10, 0.3)).theta == 0.0);
}

TEST_CASE("clockwise_angle stays in (-pi, pi]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int i = 0; i < 1000; ++i) {
    const double a = clockwise_angle(u(rng), u(rng), u(rng), u(rng));
    CHECK(a > -std::numbers::pi);
    CHECK(a <= std::numbers::pi);
  }
  CHECK(clockwise_angle(1, 0, -1, 0) == doctest::Approx(std::numbers::pi));
}

TEST_CASE("pseudo distance") {
  RiskFieldParams p;
  p.tau = 1.0;
  CHECK(pseudo_distance(at(0, 0, 0.0), at(10, 0), p) == 10.0);
  CHECK(pseudo_distance(at(3, 4), at(3, 4), p) == 0.0);

  RiskFieldParams d;
  const double got = pseudo_distance(at(0, 0, 20.0), at(30, 3.5), d);
  const oracle::mp kx = oracle::mp(30) * oracle::mp(0.2) / boost::multiprecision::exp(oracle::mp(0.2) * 20);
  const oracle::mp ky = oracle::mp(3.5) * oracle::mp(0.2);
  const double want = static_cast<double>(boost::multiprecision::sqrt(kx * kx + ky * ky));
  CHECK(rel(got, want) < 1e-12);
}

TEST_CASE("kinetic field strength") {
  RiskFieldParams p;
  p.tau = 1.0;
  VehicleState sv = at(0, 0, 0.0, 0.0, 0.0, 2000.0);
  const FieldForce e = kinetic_field_strength(sv, at(10, 0), p);
  CHECK(e.magnitude == doctest::Approx(66.9).epsilon(1e-12));
  CHECK(e.fx == doctest::Approx(66.9).epsilon(1e-12));
  CHECK(e.fy == 0.0);

  VehicleState heavier = sv;
  heavier.mass *= 2.0;
  CHECK(kinetic_field_strength(heavier, at(10, 0), p).magnitude == doctest::Approx(2 * e.magnitude));

  CHECK_THROWS_AS(kinetic_field_strength(sv, at(0, 0), p), SingularPosition);
}

TEST_CASE("field force against the high-precision oracle") {
  RiskFieldParams p;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(-60, 60), lat(-8, 8), spd(0, 35), hd(-0.2, 0.2),
      acc(-3, 3), mass(1000, 40000);
  for (int i = 0; i < 200; ++i) {
    VehicleState sv = at(0, 0, spd(rng), hd(rng), acc(rng), mass(rng));
    VehicleState ov = at(pos(rng), lat(rng), spd(rng), hd(rng), acc(rng), mass(rng));
    sv.vclass = i % 3 == 0 ? VehicleClass::kHeavy : VehicleClass::kLight;
    ov.vclass = i % 5 == 0 ? VehicleClass::kHeavy : VehicleClass::kLight;
    const FieldForce f = field_force(sv, ov, p);
    const oracle::Body a{sv.x, sv.y, sv.speed, sv.heading, sv.acceleration, sv.mass,
                         p.weight_correction(sv.vclass)};
    const oracle::Body b{ov.x, ov.y, ov.speed, ov.heading, ov.acceleration, ov.mass,
                         p.weight_correction(ov.vclass)};
    const double want = static_cast<double>(
        oracle::force_magnitude(a, b, {p.beta1, p.beta2, p.beta3, p.lambda_field, p.tau, p.warp()}));
    CHECK(rel(f.magnitude, want) < 1e-10);
    CHECK(rel(f.fx * f.fx + f.fy * f.fy, f.magnitude * f.magnitude) < 1e-9);
  }
}

TEST_CASE("matched motion leaves only the prefactor") {
  RiskFieldParams p;
  const VehicleState sv = at(0, 0, 20, 0, 1.0, 1800);
  const VehicleState ov = at(25, 2, 20, 0, 1.0, 1300);
  const double e = kinetic_field_strength(sv, ov, p).magnitude;
  const double f = field_force(sv, ov, p).magnitude;
  CHECK(f == doctest::Approx(p.t_light * 1300 * speed_term(20) * e).epsilon(1e-14));
}

TEST_CASE("mass linearity and speed amplification") {
  RiskFieldParams p;
  const VehicleState sv = at(0, 0, 15, 0, 0, 1500);
  VehicleState ov = at(20, 3.5, 25, 0, 0, 1000);
  const double base = field_force(sv, ov, p).magnitude;
  ov.mass = 3000;
  CHECK(field_force(sv, ov, p).magnitude == doctest::Approx(3 * base).epsilon(1e-13));

  double prev = 0.0;
  for (double v = 0; v <= 40; v += 0.5) {
    RiskFieldParams q;
    q.warp_coeff = 0.0;  // fixed geometry in pseudo coordinates
    q.beta2 = 0.0;
    const double m = field_force(at(0, 0, v), at(20, 3.5, 20), q).magnitude;
    CHECK(m >= prev);
    prev = m;
  }
}

TEST_CASE("field is stronger behind a slower SV") {
  for (double beta2 : {0.01, 0.05, 0.2}) {
    for (double dv : {1.0, 5.0, 15.0}) {
      RiskFieldParams p;
      p.beta2 = beta2;
      const VehicleState sv = at(0, 0, 15);
      for (double d = 2; d <= 50; d += 1) {
        const double behind = field_force(sv, at(-d, 0, 15 + dv), p).magnitude;
        const double ahead = field_force(sv, at(d, 0, 15 + dv), p).magnitude;
        CHECK(behind > ahead);
      }
    }
  }
}

TEST_CASE("field decays along rays") {
  RiskFieldParams p;
  const VehicleState sv = at(0, 0, 20);
  for (double angle = 0; angle < 2 * std::numbers::pi; angle += 0.3) {
    double prev = INFINITY;
    for (double r = 0.5; r < 150; r += 0.5) {
      const double m =
          field_force(sv, at(r * std::cos(angle), r * std::sin(angle), 20), p).magnitude;
      CHECK(m < prev);
      prev = m;
    }
  }
}

TEST_CASE("adr sums pair magnitudes") {
  RiskFieldParams p;
  const VehicleState ov = at(0, 0, 20);
  CHECK(adr(ov, {}, p) == 0.0);
  std::vector<VehicleState> svs = {at(20, 0, 18), at(-15, 3.5, 25, 0, 1, 20000), at(5, -3.5, 22)};
  double want = 0.0;
  for (const auto& s : svs) want += field_force(s, ov, p).magnitude;
  CHECK(adr(ov, svs, p) == want);
  CHECK(adr(ov, std::span(svs).first(1), p) == field_force(svs[0], ov, p).magnitude);
  std::reverse(svs.begin(), svs.end());
  CHECK(rel(adr(ov, svs, p), want) < 1e-12);
  svs.push_back(at(0, 0));
  CHECK_THROWS_AS(adr(ov, svs, p), SingularPosition);
}

TEST_CASE("grid export") {
  RiskFieldParams p;
  const VehicleState sv = at(0, 0, 20);
  VehicleState probe = at(0, 0, 20);

  GridSpec one{5, 5, 2, 2, 1.0};
  auto cells = field_grid_export(sv, p, one, probe);
  REQUIRE(cells.size() == 1);
  CHECK(cells[0].force == field_force(sv, at(5, 2, 20), p).magnitude);

  GridSpec sym{-20, 20, -6, 6, 1.0};
  cells = field_grid_export(sv, p, sym, probe);
  const std::size_t nx = 41, ny = 13;
  REQUIRE(cells.size() == nx * ny);
  for (std::size_t j = 0; j < ny; ++j) {
    for (std::size_t i = 0; i < nx; ++i) {
      const auto& a = cells[j * nx + i];
      const auto& b = cells[(ny - 1 - j) * nx + i];
      CHECK(a.y == -b.y);
      if (std::isinf(a.force)) {
        CHECK(std::isinf(b.force));
      } else {
        CHECK(rel(a.force, b.force) < 1e-9);
      }
    }
  }
  CHECK(std::isinf(cells[6 * nx + 20].force));

  CHECK_THROWS_AS(field_grid_export(sv, p, GridSpec{0, 1, 0, 1, 0.0}, probe), InvalidGrid);

  std::ostringstream os;
  write_grid_csv(os, cells);
  const std::string text = os.str();
  CHECK(text.rfind("x,y,force\n", 0) == 0);
  CHECK(text.find(",inf\n") != std::string::npos);
}
