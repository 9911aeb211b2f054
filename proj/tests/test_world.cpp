#include "forksim/world.hpp"

#include <cmath>

#include "doctest.h"

using namespace forksim;
using namespace forksim::world;

namespace {

WorldState flat_world(std::uint64_t seed = 7) {
  WorldState ws;
  ws.rng_seed = seed;
  return ws;
}

control::Commands cmd(double u_v = 0.0, double u_gamma = 0.0,
                      double u_lift = 0.0) {
  control::Commands c;
  c.u_v = u_v;
  c.u_gamma = u_gamma;
  c.u_lift = u_lift;
  return c;
}

}  // namespace

TEST_CASE("quiescent world only advances time") {
  World w(flat_world(), WorldParams{}, NoiseProfile::none());
  const Pose2D start = w.state().vehicle.front;
  SensorBundle b;
  for (int i = 0; i < 100; ++i) b = w.step(cmd(), 0.01);
  CHECK(w.state().vehicle.front.x == doctest::Approx(start.x));
  CHECK(w.state().vehicle.front.y == doctest::Approx(start.y));
  CHECK(w.state().time == doctest::Approx(1.0));
  CHECK(b.lift_pressure == doctest::Approx(30.0));
  CHECK(b.joints.lift == doctest::Approx(0.0));
}

TEST_CASE("straight drive matches the lag plus integration prediction") {
  WorldParams params;
  World w(flat_world(), params, NoiseProfile::none());
  const double v_target = 1.0;
  const double u = v_target / params.drive.k1;
  const double T = 10.0;
  for (int i = 0; i < 1000; ++i) w.step(cmd(u), 0.01);
  // distance = v (T - tau (1 - e^{-T/tau}))
  const double tau = params.drive.tau;
  const double expect = v_target * (T - tau * (1.0 - std::exp(-T / tau)));
  CHECK(w.state().vehicle.front.x == doctest::Approx(expect).epsilon(0.01));
  CHECK(std::abs(w.state().vehicle.front.y) < 1e-9);
}

TEST_CASE("equal seeds and commands give bit-identical sensor streams") {
  NoiseProfile noise;
  noise.odom_v_sigma = 0.02;
  noise.odom_gamma_sigma = 0.01;
  noise.gnss_xy_sigma = 0.05;
  noise.gnss_heading_sigma = 0.01;
  noise.pressure_sigma = 0.3;
  noise.lidar_range_sigma = 0.01;
  WorldState ws = flat_world(42);
  ws.obstacles.push_back({0, {6.0, 1.0}, {0.4, 0.4}, 1.7, {0.2, 0.0}});
  World a(ws, WorldParams{}, noise);
  World b(ws, WorldParams{}, noise);
  for (int i = 0; i < 200; ++i) {
    const auto c = cmd(0.4, 0.1 * std::sin(0.05 * i), 0.2);
    const SensorBundle sa = a.step(c, 0.01);
    const SensorBundle sb = b.step(c, 0.01);
    REQUIRE(sa.odometry.v == sb.odometry.v);
    REQUIRE(sa.odometry.gamma == sb.odometry.gamma);
    REQUIRE(sa.gnss.has_value() == sb.gnss.has_value());
    if (sa.gnss) {
      REQUIRE(sa.gnss->x == sb.gnss->x);
      REQUIRE(sa.gnss->heading == sb.gnss->heading);
    }
    REQUIRE(sa.lift_pressure == sb.lift_pressure);
    REQUIRE(sa.front_cloud.size() == sb.front_cloud.size());
    for (size_t k = 0; k < sa.front_cloud.size(); ++k) {
      REQUIRE(sa.front_cloud[k].x == sb.front_cloud[k].x);
      REQUIRE(sa.front_cloud[k].z == sb.front_cloud[k].z);
    }
  }
}

TEST_CASE("gnss is absent exactly inside dropout windows") {
  NoiseProfile noise;
  noise.gnss_dropout_windows = {{1.0, 2.0}, {3.0, 3.5}};
  World w(flat_world(), WorldParams{}, noise);
  for (int i = 0; i < 400; ++i) {
    const SensorBundle b = w.step(cmd(), 0.01);
    const double t = b.time;
    const bool in_window =
        (t >= 1.0 && t <= 2.0) || (t >= 3.0 && t <= 3.5);
    CHECK(b.gnss.has_value() == !in_window);
  }
}

TEST_CASE("lifting pressure is linear in the carried mass") {
  WorldState ws = flat_world();
  ws.vehicle.lift = 0.5;
  PalletGroundTruth pal;
  pal.id = 3;
  pal.mass_kg = 500.0;
  pal.carried = true;
  const auto tip = vehicle::fork_tip_pose(ws.vehicle, {});
  pal.pose = tip.pose;
  pal.z = 0.4;
  ws.pallets.push_back(pal);
  World w(ws, WorldParams{}, NoiseProfile::none());
  const SensorBundle b = w.step(cmd(), 0.01);
  CHECK(b.lift_pressure == doctest::Approx(30.0 + 500.0 * 0.05));
}

TEST_CASE("carried pallet follows the fork tip rigidly") {
  WorldState ws = flat_world();
  ws.vehicle.lift = 0.5;
  PalletGroundTruth pal;
  pal.carried = true;
  const auto tip0 = vehicle::fork_tip_pose(ws.vehicle, {});
  pal.pose = Pose2D{tip0.pose.x + 0.1, tip0.pose.y, tip0.pose.theta};
  pal.z = 0.45;
  ws.pallets.push_back(pal);
  World w(ws, WorldParams{}, NoiseProfile::none());
  const Pose2D offset0 = tip0.pose.between(pal.pose);
  for (int i = 0; i < 300; ++i) {
    w.step(cmd(0.5, 0.3, 0.1), 0.01);
    const auto tip = vehicle::fork_tip_pose(w.state().vehicle, {});
    const Pose2D offset = tip.pose.between(w.state().pallets[0].pose);
    REQUIRE(std::abs(offset.x - offset0.x) < 1e-12);
    REQUIRE(std::abs(offset.y - offset0.y) < 1e-12);
    REQUIRE(std::abs(normalize_angle(offset.theta - offset0.theta)) < 1e-12);
  }
  CHECK(w.state().carried_pallet == 0);
}

TEST_CASE("reversing onto an aligned pallet attaches it") {
  WorldState ws = flat_world();
  ws.vehicle.lift = 0.12;
  PalletGroundTruth pal;
  pal.id = 9;
  pal.mass_kg = 200.0;
  pal.pose = Pose2D{-3.9, 0.0, 0.0};  // insertion axis toward the vehicle
  pal.z = 0.0;
  ws.pallets.push_back(pal);
  WorldParams params;
  World w(ws, params, NoiseProfile::none());

  CHECK(insertion_depth(ws.vehicle, pal, params) == doctest::Approx(0.0));
  SensorBundle b;
  for (int i = 0; i < 400 && w.state().carried_pallet < 0; ++i)
    b = w.step(cmd(-0.6), 0.01);
  REQUIRE(w.state().carried_pallet == 0);
  CHECK(insertion_depth(w.state().vehicle, w.state().pallets[0], params) >=
        params.attach_insertion);
  // Load shows up in the pressure once carried.
  b = w.step(cmd(), 0.01);
  CHECK(b.lift_pressure == doctest::Approx(30.0 + 200.0 * 0.05));
  // Raising the forks raises the pallet.
  const double z0 = w.state().pallets[0].z;
  for (int i = 0; i < 200; ++i) w.step(cmd(0.0, 0.0, 1.0), 0.01);
  CHECK(w.state().pallets[0].z > z0 + 0.2);
}

TEST_CASE("lowering a carried pallet transfers support and releases it") {
  WorldState ws = flat_world();
  ws.vehicle.lift = 0.8;
  PalletGroundTruth pal;
  pal.mass_kg = 300.0;
  pal.carried = true;
  const auto tip = vehicle::fork_tip_pose(ws.vehicle, {});
  // Fully inserted: pallet centered on the fork shaft, insertion axis
  // opposing the fork direction.
  pal.pose = tip.pose.compose(Pose2D{-1.2, 0.0, kPi});
  pal.z = 0.7;
  ws.pallets.push_back(pal);
  World w(ws, WorldParams{}, NoiseProfile::none());

  SensorBundle b;
  int contact_step = -1;
  for (int i = 0; i < 2000; ++i) {
    b = w.step(cmd(0.0, 0.0, -1.0), 0.01);
    if (b.lift_pressure < 0.55 * (30.0 + 300.0 * 0.05)) {
      contact_step = i;
      break;
    }
  }
  REQUIRE(contact_step > 0);
  CHECK(w.state().carried_pallet == -1);
  CHECK(w.state().pallets[0].z == doctest::Approx(0.0));
  // Continued lowering settles on the pocket floor and stays in contact.
  for (int i = 0; i < 100; ++i) b = w.step(cmd(0.0, 0.0, -1.0), 0.01);
  CHECK(w.state().vehicle.lift == doctest::Approx(0.02));
  CHECK(b.lift_pressure == doctest::Approx(15.0));
  // A small clearance lift inside the pockets must not re-attach the pallet.
  for (int i = 0; i < 60; ++i) w.step(cmd(0.0, 0.0, 0.6), 0.01);
  CHECK(w.state().carried_pallet == -1);
  // Driving the forks out leaves the pallet where it was placed.
  const Pose2D placed = w.state().pallets[0].pose;
  for (int i = 0; i < 300; ++i) w.step(cmd(0.6), 0.01);
  CHECK(w.state().carried_pallet == -1);
  CHECK(w.state().pallets[0].pose.x == doctest::Approx(placed.x));
}

TEST_CASE("empty forks lowered onto a deck read contact pressure") {
  WorldState ws = flat_world();
  ws.vehicle.lift = 1.5;
  ws.truck.present = true;
  ws.truck.deck_height = 1.1;
  // Deck centered under the fork tips.
  const auto tip = vehicle::fork_tip_pose(ws.vehicle, {});
  ws.truck.pose = Pose2D{tip.pose.x - 2.0, tip.pose.y, 0.0};
  World w(ws, WorldParams{}, NoiseProfile::none());

  SensorBundle b;
  for (int i = 0; i < 400; ++i) b = w.step(cmd(0.0, 0.0, -1.0), 0.01);
  CHECK(w.state().vehicle.lift == doctest::Approx(1.1));
  CHECK(b.lift_pressure == doctest::Approx(15.0));
  // Raising clears the contact (the lagged cylinder takes a moment to
  // reverse direction).
  for (int i = 0; i < 150; ++i) b = w.step(cmd(0.0, 0.0, 0.5), 0.01);
  CHECK(b.lift_pressure == doctest::Approx(30.0));
}

TEST_CASE("lidar on empty flat ground returns only ground points") {
  World w(flat_world(), WorldParams{}, NoiseProfile::none());
  const auto cloud =
      w.lidar_sample(w.params().front_lidar, false, 25.0);
  REQUIRE(cloud.size() > 1000);
  for (const auto& p : cloud) {
    REQUIRE(p.z == doctest::Approx(-w.params().front_lidar.mount_z));
    REQUIRE(std::hypot(p.x, p.y) <= 25.0 + 1e-9);
  }
}

TEST_CASE("lidar sees a box face and occludes what is behind it") {
  WorldState ws = flat_world();
  ws.obstacles.push_back({0, {5.0, 0.0}, {0.3, 0.3}, 2.5, {0.0, 0.0}});
  ws.obstacles.push_back({1, {8.0, 0.0}, {0.3, 0.3}, 1.7, {0.0, 0.0}});
  World w(ws, WorldParams{}, NoiseProfile::none());
  const auto cloud = w.lidar_sample(w.params().front_lidar, false, 25.0);

  int near_face = 0, far_face = 0;
  const double x_off = w.params().front_lidar.mount.x;
  for (const auto& p : cloud) {
    const double wx = p.x + x_off;
    if (p.z > -1.8 && std::abs(p.y) < 0.3) {
      if (std::abs(wx - 4.7) < 0.05) ++near_face;
      if (std::abs(wx - 7.7) < 0.05) ++far_face;
    }
  }
  CHECK(near_face > 20);
  CHECK(far_face == 0);  // fully shadowed by the near box
}

TEST_CASE("lidar sees the truck deck surface and its front face") {
  WorldState ws = flat_world();
  ws.truck.present = true;
  ws.truck.deck_height = 1.1;
  ws.truck.pose = Pose2D{9.0, 0.0, 0.0};  // loading edge faces the vehicle
  World w(ws, WorldParams{}, NoiseProfile::none());
  const auto cloud = w.lidar_sample(w.params().front_lidar, false, 25.0);

  const double z_deck = 1.1 - w.params().front_lidar.mount_z;
  int deck = 0, face = 0;
  for (const auto& p : cloud) {
    if (std::abs(p.z - z_deck) < 0.02 && p.x > 5.0) ++deck;
    if (p.z > 0.35 - 1.9 && p.z < z_deck - 0.02 && std::abs(p.x - 5.7) < 0.05)
      ++face;
  }
  CHECK(deck > 50);
  CHECK(face > 20);
}

TEST_CASE("obstacles advance at their constant velocity") {
  WorldState ws = flat_world();
  ws.obstacles.push_back({0, {5.0, 0.0}, {0.3, 0.3}, 1.7, {1.0, -0.5}});
  World w(ws, WorldParams{}, NoiseProfile::none());
  for (int i = 0; i < 100; ++i) w.step(cmd(), 0.01);
  CHECK(w.state().obstacles[0].center.x == doctest::Approx(6.0));
  CHECK(w.state().obstacles[0].center.y == doctest::Approx(-0.5));
}

TEST_CASE("out-of-range commands are clamped and counted") {
  WorldParams params;
  World w(flat_world(), params, NoiseProfile::none());
  for (int i = 0; i < 500; ++i) w.step(cmd(3.0), 0.01);
  CHECK(w.clamp_events() == 500);
  CHECK(w.state().vehicle.v <= params.vehicle.v_max + 1e-9);
}

TEST_CASE("insertion depth needs lateral and angular alignment") {
  WorldParams params;
  vehicle::VehicleState veh;  // front axle at origin, forks pointing -x
  PalletGroundTruth pal;
  pal.pose = Pose2D{-2.4, 0.0, 0.0};  // front face 0.9 m past the tips
  CHECK(insertion_depth(veh, pal, params) ==
        doctest::Approx(0.9 / params.vehicle.fork_length));
  pal.pose = Pose2D{-2.4, 0.8, 0.0};  // beyond the pocket mouth
  CHECK(insertion_depth(veh, pal, params) == 0.0);
  pal.pose = Pose2D{-2.4, 0.0, 1.0};  // skewed
  CHECK(insertion_depth(veh, pal, params) == 0.0);
}

TEST_CASE("terrain height field interpolates and sets the vehicle z") {
  WorldState ws = flat_world();
  ws.terrain.resolution = 1.0;
  ws.terrain.origin = {-5.0, -5.0};
  ws.terrain.nx = 11;
  ws.terrain.ny = 11;
  ws.terrain.heights.assign(121, 0.0);
  // One raised row at iy = 7 (y = 2).
  for (int i = 0; i < 11; ++i) ws.terrain.heights[7 * 11 + i] = 0.5;
  CHECK(ws.terrain.height_at(0.0, 2.0) == doctest::Approx(0.5));
  CHECK(ws.terrain.height_at(0.0, 1.5) == doctest::Approx(0.25));
  CHECK(ws.terrain.height_at(0.0, -3.0) == doctest::Approx(0.0));
  ws.vehicle.front = Pose2D{0.0, 2.0, 0.0};
  World w(ws, WorldParams{}, NoiseProfile::none());
  CHECK(w.vehicle_z() == doctest::Approx(0.5));
}
