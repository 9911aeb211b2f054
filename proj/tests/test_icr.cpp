#include <doctest.h>

#include <cmath>

#include "forksim/icr.hpp"
#include "forksim/vehicle_model.hpp"

using namespace forksim;
using namespace forksim::planning;

namespace {
const vehicle::VehicleParams kParams;

// Planar geometric oracle: place the articulated vehicle with the front axle
// at the origin heading +x, articulation alpha; intersect the perpendiculars
// through both axles and return the front-axle ICR radius.
double geometric_icr_radius(double alpha) {
  const Pose2D front(0, 0, 0);
  const Pose2D rear = vehicle::rear_pose(front, alpha, kParams);
  // Front perpendicular: the y axis (x = 0), parameterized by t.
  // Rear perpendicular: rear.position() + s * unit(rear.theta + pi/2).
  const Vec2 dir = unit(rear.theta + kPi / 2.0);
  const double s = -rear.x / dir.x;
  const Vec2 icr = rear.position() + dir * s;
  CHECK(std::abs(icr.x) < 1e-12);  // must lie on the front perpendicular
  return std::abs(icr.y);
}
}  // namespace

TEST_CASE("straight driving maps to zero steering both ways") {
  CHECK(gamma_from_icr(0.0, 0.0, kParams) == doctest::Approx(0.0));
  auto a = icr_convert(0.0, 0.0, kParams);
  REQUIRE(a.has_value());
  CHECK(*a == doctest::Approx(0.0));
}

TEST_CASE("front-axle ICR radius matches the planar construction") {
  for (double alpha : {0.1, 0.25, 0.4, 0.6, 0.7}) {
    const double r = icr_radius_front(alpha, 0.0, kParams);
    CHECK(r == doctest::Approx(geometric_icr_radius(alpha)).epsilon(1e-9));
  }
}

TEST_CASE("conversion pair is a fixed point") {
  for (double alpha = -0.7; alpha <= 0.7; alpha += 0.05) {
    const double gcl = gamma_from_icr(alpha, 0.0, kParams);
    const auto back = icr_convert(gcl, 0.0, kParams);
    REQUIRE(back.has_value());
    CHECK(std::abs(*back - alpha) < 1e-9);
  }
}

TEST_CASE("deviation from the car-like angle is zero at origin and monotone") {
  // With the front-axle ICR matched, the equivalent car-like angle runs
  // slightly ahead of the articulation angle; the gap grows monotonically
  // away from straight driving.
  double prev_dev = 0.0;
  bool first = true;
  for (double alpha = 0.0; alpha <= 0.7; alpha += 0.02) {
    const double gcl = gamma_from_icr(alpha, 0.0, kParams);
    const double dev = std::abs(alpha - gcl);
    if (first) {
      CHECK(dev < 1e-12);
      first = false;
    } else {
      CHECK(dev >= prev_dev - 1e-12);
    }
    prev_dev = dev;
  }
  CHECK(prev_dev > 0.0);  // strictly grows away from zero
}

TEST_CASE("joint tilt is consistent between forward and inverse maps") {
  const double beta = 0.2;
  const auto alpha = icr_convert(0.4, beta, kParams);
  REQUIRE(alpha.has_value());
  CHECK(gamma_from_icr(*alpha, beta, kParams) == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("curvature beyond the articulation limit is infeasible") {
  const double kappa = max_curvature(kParams);
  const double too_sharp = gamma_cl_from_curvature(1.3 * kappa, kParams);
  CHECK_FALSE(icr_convert(too_sharp, 0.0, kParams).has_value());
  // The limit itself stays feasible.
  const double at_limit = gamma_cl_from_curvature(kappa, kParams);
  const auto a = icr_convert(at_limit, 0.0, kParams);
  REQUIRE(a.has_value());
  CHECK(std::abs(*a) <= kParams.gamma_max + 1e-9);
}

TEST_CASE("curvature and steering angle agree with the bicycle relation") {
  for (double g = -0.6; g <= 0.6; g += 0.1) {
    const double kappa = curvature_from_gamma_cl(g, kParams);
    CHECK(gamma_cl_from_curvature(kappa, kParams) == doctest::Approx(g).epsilon(1e-12));
    CHECK(kappa == doctest::Approx(std::sin(g) / kParams.wheelbase()));
  }
}
