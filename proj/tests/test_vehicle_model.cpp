#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "forksim/vehicle_model.hpp"

using namespace forksim;
using namespace forksim::vehicle;

namespace {
const VehicleParams kParams;

VehicleState integrate(VehicleState s, double v, double gdot, double duration,
                       double dt) {
  const int n = static_cast<int>(std::floor(duration / dt));
  for (int i = 0; i < n; ++i) s = kinematics_step(s, v, gdot, dt, kParams);
  const double rest = duration - n * dt;
  if (rest > 1e-12) s = kinematics_step(s, v, gdot, rest, kParams);
  return s;
}
}  // namespace

TEST_CASE("straight driving advances along heading") {
  VehicleState s;
  s = kinematics_step(s, 1.0, 0.0, 1.0, kParams);
  CHECK(s.front.x == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(s.front.y == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(s.front.theta == doctest::Approx(0.0));
  CHECK(s.gamma == doctest::Approx(0.0));
}

TEST_CASE("constant articulation closes a circle") {
  // Heading rate at constant gamma: v * sin(g) / (l_f cos(g) + l_r).
  const double g = 0.3, v = 1.0;
  const double theta_dot =
      v * std::sin(g) / (kParams.l_f * std::cos(g) + kParams.l_r);
  const double period = 2.0 * kPi / theta_dot;
  VehicleState s;
  s.gamma = g;
  s = integrate(s, v, 0.0, period, 1e-3);
  CHECK(std::abs(s.front.x) < 1e-6);
  CHECK(std::abs(s.front.y) < 1e-6);
  CHECK(std::abs(normalize_angle(s.front.theta)) < 1e-6);
}

TEST_CASE("zero velocity only moves the articulation joint angle") {
  VehicleState s;
  s.front = Pose2D(2.0, 3.0, 0.5);
  s = kinematics_step(s, 0.0, 0.2, 1.0, kParams);
  CHECK(s.front.x == doctest::Approx(2.0));
  CHECK(s.front.y == doctest::Approx(3.0));
  CHECK(s.gamma == doctest::Approx(0.2).epsilon(1e-9));
}

TEST_CASE("coarse step stays close to fine reference over 10 s") {
  VehicleState coarse, fine;
  coarse.gamma = fine.gamma = 0.1;
  // Piecewise-constant command schedule within actuator limits.
  const double vs[5] = {1.5, 0.8, -0.5, 1.2, 1.67};
  const double gs[5] = {0.2, -0.3, 0.1, 0.0, -0.2};
  for (int seg = 0; seg < 5; ++seg) {
    coarse = integrate(coarse, vs[seg], gs[seg], 2.0, 0.01);
    fine = integrate(fine, vs[seg], gs[seg], 2.0, 0.001);
  }
  CHECK(std::abs(coarse.front.x - fine.front.x) < 1e-4);
  CHECK(std::abs(coarse.front.y - fine.front.y) < 1e-4);
}

TEST_CASE("constant commands give constant curvature") {
  VehicleState s;
  s.gamma = 0.25;
  std::vector<double> rates;
  double prev_theta = s.front.theta;
  for (int i = 0; i < 1000; ++i) {
    s = kinematics_step(s, 1.0, 0.0, 0.01, kParams);
    rates.push_back(normalize_angle(s.front.theta - prev_theta) / 0.01);
    prev_theta = s.front.theta;
  }
  double mean = 0.0;
  for (double r : rates) mean += r;
  mean /= rates.size();
  double var = 0.0;
  for (double r : rates) var += (r - mean) * (r - mean);
  var /= rates.size();
  CHECK(var < 1e-9);
}

TEST_CASE("non-finite inputs are rejected") {
  VehicleState s;
  CHECK_THROWS_AS(
      kinematics_step(s, std::nan(""), 0.0, 0.01, kParams),
      std::invalid_argument);
  CHECK_THROWS_AS(
      kinematics_step(s, 1.0, 0.0, -0.01, kParams), std::invalid_argument);
}

TEST_CASE("rear pose for the straight chassis") {
  const Pose2D rear = rear_pose(Pose2D(0, 0, 0), 0.0, kParams);
  CHECK(rear.x == doctest::Approx(-1.8));
  CHECK(std::abs(rear.y) < 1e-12);
  CHECK(rear.theta == doctest::Approx(kPi));
}

TEST_CASE("rear pose at right-angle articulation") {
  // Chain: joint sits l_f behind the front axle; the rear part leaves the
  // joint along theta_R = pi + theta_F - gamma. For gamma = +pi/2 (left
  // turn), both axle perpendiculars meet at (0, 0.9): the rear axle lands
  // on the positive-y side.
  const Pose2D rear = rear_pose(Pose2D(0, 0, 0), kPi / 2.0, kParams);
  CHECK(rear.x == doctest::Approx(-0.9));
  CHECK(rear.y == doctest::Approx(0.9));
  CHECK(rear.theta == doctest::Approx(kPi / 2.0));

  // Cross-check via the instantaneous center of rotation: perpendicular to
  // the front heading through the front axle is the y axis; perpendicular to
  // the rear heading through the computed rear axle must hit the same point.
  const Vec2 icr{0.0, kParams.l_f / std::tan(kPi / 4.0)};
  const Vec2 to_icr = icr - rear.position();
  CHECK(std::abs(to_icr.dot(unit(rear.theta))) < 1e-9);
}

TEST_CASE("rear pose is an involution under negated articulation") {
  std::mt19937 rng(3);
  std::uniform_real_distribution<double> u(-0.7, 0.7);
  std::uniform_real_distribution<double> p(-5.0, 5.0);
  for (int i = 0; i < 200; ++i) {
    const Pose2D q(p(rng), p(rng), p(rng));
    const double g = u(rng);
    const Pose2D back = rear_pose(rear_pose(q, g, kParams), -g, kParams);
    CHECK(std::abs(back.x - q.x) < 1e-12);
    CHECK(std::abs(back.y - q.y) < 1e-12);
    CHECK(std::abs(normalize_angle(back.theta - q.theta)) < 1e-12);
  }
}

TEST_CASE("linear drive actuator") {
  ActuatorModel m;
  m.kind = ActuatorKind::LinearDrive;
  m.k1 = 1.5;
  m.k0 = 0.1;
  CHECK(m.step(0.0, 0.01) == doctest::Approx(0.1));
  CHECK(m.step(2.0, 0.01) == doctest::Approx(3.1));
}

TEST_CASE("first-order lag matches the analytic exponential") {
  ActuatorModel m;
  m.kind = ActuatorKind::FirstOrderLag;
  m.k1 = 1.0;
  m.k0 = 0.0;
  m.tau = 0.5;
  const double y = m.step(1.0, 0.5);
  CHECK(y == doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));

  // Exactness regardless of step size for piecewise-constant input.
  ActuatorModel coarse = m, fine = m;
  coarse.y_hat = fine.y_hat = 0.2;
  coarse.step(0.8, 1.0);
  for (int i = 0; i < 1000; ++i) fine.step(0.8, 0.001);
  CHECK(std::abs(coarse.y_hat - fine.y_hat) < 1e-12);

  // Steady state after >= 7 tau.
  ActuatorModel ss = m;
  ss.k1 = 2.0;
  double out = 0.0;
  for (int i = 0; i < 400; ++i) out = ss.step(1.0, 0.01);
  CHECK(std::abs(out - 2.0) < 1e-3 * 2.0);
}

TEST_CASE("fork tip frame composition") {
  VehicleState s;
  SUBCASE("neutral fork lies on the rear heading") {
    const auto tip = fork_tip_pose(s, kParams);
    const Pose2D rear = rear_pose(s.front, 0.0, kParams);
    const double d = kParams.fork_mount_offset + kParams.fork_length;
    CHECK(tip.pose.x == doctest::Approx(rear.x + d * std::cos(rear.theta)));
    CHECK(tip.pose.y == doctest::Approx(rear.y + d * std::sin(rear.theta)));
    CHECK(tip.z == doctest::Approx(0.0));
  }
  SUBCASE("side shift displaces laterally") {
    const auto neutral = fork_tip_pose(s, kParams);
    s.shift = 0.1;
    const auto shifted = fork_tip_pose(s, kParams);
    const Vec2 d = shifted.pose.position() - neutral.pose.position();
    CHECK(d.norm() == doctest::Approx(0.1).epsilon(1e-9));
    CHECK(std::abs(d.dot(unit(neutral.pose.theta))) < 1e-12);
  }
  SUBCASE("full chain matches hand composition") {
    s.front = Pose2D(0, 0, 0);
    s.gamma = 0.2;
    s.shift = 0.05;
    s.lift = 1.0;
    const auto tip = fork_tip_pose(s, kParams);
    // Hand chain with explicit trig.
    const double th_r = kPi - 0.2;
    const double jx = -kParams.l_f, jy = 0.0;
    const double rx = jx + kParams.l_r * std::cos(th_r);
    const double ry = jy + kParams.l_r * std::sin(th_r);
    const double d = kParams.fork_mount_offset + kParams.fork_length;
    const double ex = rx + d * std::cos(th_r) + 0.05 * std::cos(th_r + kPi / 2);
    const double ey = ry + d * std::sin(th_r) + 0.05 * std::sin(th_r + kPi / 2);
    CHECK(tip.pose.x == doctest::Approx(ex).epsilon(1e-12));
    CHECK(tip.pose.y == doctest::Approx(ey).epsilon(1e-12));
    CHECK(std::abs(normalize_angle(tip.pose.theta - th_r)) < 1e-12);
    CHECK(tip.z == doctest::Approx(1.0));
  }
}
