#include "forksim/mission.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "doctest.h"
#include "forksim/behavior_tree.hpp"
#include "forksim/world.hpp"

using namespace forksim;
using namespace forksim::tasking;

namespace {

BtNode::Ptr counted(std::string name, int& ticks, BtStatus result) {
  return BtNode::action(std::move(name), [&ticks, result] {
    ++ticks;
    return result;
  });
}

}  // namespace

TEST_CASE("sequence with memory does not re-tick finished children") {
  int a = 0, b = 0;
  int b_runs = 2;
  std::vector<BtNode::Ptr> kids;
  kids.push_back(counted("a", a, BtStatus::Success));
  kids.push_back(BtNode::action("b", [&] {
    ++b;
    return --b_runs >= 0 ? BtStatus::Running : BtStatus::Success;
  }));
  auto seq = BtNode::sequence("seq", std::move(kids));

  CHECK(seq->tick() == BtStatus::Running);
  CHECK(seq->tick() == BtStatus::Running);
  CHECK(seq->tick() == BtStatus::Success);
  CHECK(a == 1);  // ticked once, then remembered
  CHECK(b == 3);

  // Completion resets the memory: a fresh run re-ticks everything.
  b_runs = 1;
  CHECK(seq->tick() == BtStatus::Running);
  CHECK(a == 2);
}

TEST_CASE("sequence failure resets to the first child") {
  int a = 0, b = 0;
  std::vector<BtNode::Ptr> kids;
  kids.push_back(counted("a", a, BtStatus::Success));
  kids.push_back(counted("b", b, BtStatus::Failure));
  auto seq = BtNode::sequence("seq", std::move(kids));
  CHECK(seq->tick() == BtStatus::Failure);
  CHECK(seq->tick() == BtStatus::Failure);
  CHECK(a == 2);
  CHECK(b == 2);
}

TEST_CASE("fallback takes the first succeeding child and keeps memory") {
  int a = 0, c = 0;
  int b_runs = 1;
  std::vector<BtNode::Ptr> kids;
  kids.push_back(counted("a", a, BtStatus::Failure));
  kids.push_back(BtNode::action("b", [&] {
    return --b_runs >= 0 ? BtStatus::Running : BtStatus::Success;
  }));
  kids.push_back(counted("c", c, BtStatus::Success));
  auto fb = BtNode::fallback("fb", std::move(kids));
  CHECK(fb->tick() == BtStatus::Running);
  CHECK(fb->tick() == BtStatus::Success);
  CHECK(a == 1);  // not re-ticked while b was running
  CHECK(c == 0);  // never reached
}

TEST_CASE("repeat runs the child a fixed number of times") {
  int n = 0;
  auto rep = BtNode::repeat("rep", 3, counted("child", n, BtStatus::Success));
  CHECK(rep->tick() == BtStatus::Running);
  CHECK(rep->tick() == BtStatus::Running);
  CHECK(rep->tick() == BtStatus::Success);
  CHECK(n == 3);

  int m = 0;
  auto rep2 = BtNode::repeat("rep", 2, counted("child", m, BtStatus::Failure));
  CHECK(rep2->tick() == BtStatus::Failure);
}

TEST_CASE("repeat drain mode succeeds once the child fails") {
  int successes_left = 2;
  auto rep = BtNode::repeat("rep", -1, BtNode::action("child", [&] {
    return --successes_left >= 0 ? BtStatus::Success : BtStatus::Failure;
  }));
  CHECK(rep->tick() == BtStatus::Running);
  CHECK(rep->tick() == BtStatus::Running);
  CHECK(rep->tick() == BtStatus::Success);
}

TEST_CASE("malformed trees are rejected at construction") {
  CHECK_THROWS_AS(BtNode::sequence("s", {}), std::invalid_argument);
  CHECK_THROWS_AS(BtNode::fallback("f", {}), std::invalid_argument);
  CHECK_THROWS_AS(BtNode::action("a", nullptr), std::invalid_argument);
  CHECK_THROWS_AS(BtNode::condition("c", nullptr), std::invalid_argument);
  CHECK_THROWS_AS(BtNode::repeat("r", 0, BtNode::action("a", [] {
                    return BtStatus::Success;
                  })),
                  std::invalid_argument);
  CHECK_THROWS_AS(BtNode::repeat("r", -2, BtNode::action("a", [] {
                    return BtStatus::Success;
                  })),
                  std::invalid_argument);
  CHECK_THROWS_AS(BtNode::repeat("r", 1, nullptr), std::invalid_argument);
  std::vector<BtNode::Ptr> with_null;
  with_null.push_back(nullptr);
  CHECK_THROWS_AS(BtNode::sequence("s", std::move(with_null)),
                  std::invalid_argument);
}

TEST_CASE("a running tick executes exactly one running leaf") {
  std::vector<BtNode::Ptr> kids;
  kids.push_back(BtNode::condition("gate", [] { return true; }));
  kids.push_back(BtNode::action("work", [] { return BtStatus::Running; }));
  kids.push_back(BtNode::action("later", [] { return BtStatus::Success; }));
  auto seq = BtNode::sequence("seq", std::move(kids));

  std::vector<std::string> trace;
  CHECK(seq->tick(&trace) == BtStatus::Running);
  REQUIRE(trace.size() == 2);
  CHECK(trace[0] == "gate:S");
  CHECK(trace[1] == "work:R");
  const int running = static_cast<int>(
      std::count_if(trace.begin(), trace.end(), [](const std::string& s) {
        return s.back() == 'R';
      }));
  CHECK(running == 1);

  // Same tree, same inputs, same trace.
  std::vector<std::string> again;
  seq->reset();
  seq->tick(&again);
  CHECK(again == trace);
}

namespace {

mapping::CostMap free_map(double x0 = -16.0, double y0 = -9.0, int w = 340,
                          int h = 180) {
  mapping::CostMap cm;
  cm.origin_x = x0;
  cm.origin_y = y0;
  cm.resolution = 0.1;
  cm.width = w;
  cm.height = h;
  cm.state.assign(static_cast<size_t>(w) * h, mapping::OccState::Free);
  cm.cost.assign(static_cast<size_t>(w) * h, 0.0);
  return cm;
}

void occupy_rect(mapping::CostMap& cm, double x_min, double x_max,
                 double y_min, double y_max) {
  for (int cy = 0; cy < cm.height; ++cy)
    for (int cx = 0; cx < cm.width; ++cx) {
      double x, y;
      cm.cell_to_world(cx, cy, x, y);
      if (x >= x_min && x <= x_max && y >= y_min && y <= y_max) {
        cm.state[cm.index(cx, cy)] = mapping::OccState::Occupied;
        cm.cost[cm.index(cx, cy)] = 1.0;
      }
    }
}

}  // namespace

TEST_CASE("pre-approach pose sits ahead of the target face, same heading") {
  const Pose2D p = pre_approach_pose(Pose2D{2.0, 1.0, kPi / 2.0}, 4.0);
  CHECK(p.x == doctest::Approx(2.0));
  CHECK(p.y == doctest::Approx(5.0));
  CHECK(p.theta == doctest::Approx(kPi / 2.0));
}

TEST_CASE("pallet selection prefers the shortest approach path") {
  TaskingParams params;
  const auto cm = free_map();
  std::vector<PalletCandidate> cands;
  cands.push_back({7, Pose2D{5.0, 0.0, 0.0}, 0.0});
  cands.push_back({3, Pose2D{10.0, 4.0, 0.0}, 0.0});
  const auto r = select_pallet(cands, Pose2D{0.0, 0.0, 0.0}, cm, params);
  REQUIRE(r.has_value());
  CHECK(r->id == 7);
  CHECK(r->path_length > 8.0);

  // Equal-length options resolve to the lowest id.
  std::vector<PalletCandidate> tied;
  tied.push_back({5, Pose2D{5.0, 0.0, 0.0}, 0.0});
  tied.push_back({2, Pose2D{5.0, 0.0, 0.0}, 0.0});
  const auto t = select_pallet(tied, Pose2D{0.0, 0.0, 0.0}, cm, params);
  REQUIRE(t.has_value());
  CHECK(t->id == 2);
}

TEST_CASE("inaccessible nearest pallet falls back to a reachable one") {
  TaskingParams params;
  auto cm = free_map();
  // Wall the near pre-approach pose in so its footprint is occupied.
  occupy_rect(cm, 7.0, 11.0, -1.5, 1.5);
  std::vector<PalletCandidate> cands;
  cands.push_back({1, Pose2D{5.0, 0.0, 0.0}, 0.0});  // pre-approach at (9, 0)
  cands.push_back({2, Pose2D{6.0, 5.0, 0.0}, 0.0});
  const auto r = select_pallet(cands, Pose2D{0.0, -3.0, 0.0}, cm, params);
  REQUIRE(r.has_value());
  CHECK(r->id == 2);

  // Nothing reachable -> no selection.
  std::vector<PalletCandidate> blocked;
  blocked.push_back({1, Pose2D{5.0, 0.0, 0.0}, 0.0});
  CHECK_FALSE(
      select_pallet(blocked, Pose2D{0.0, -3.0, 0.0}, cm, params).has_value());
}

namespace {

control::InnerLoop make_inner(const world::WorldParams& wp) {
  control::InnerLoop inner;
  inner.drive.model = wp.drive;
  inner.steer.model = wp.steer;
  inner.lift.model = wp.lift;
  inner.shift.model = wp.shift;
  inner.tilt.model = wp.tilt;
  return inner;
}

control::JointFeedback feedback(const world::SensorBundle& b) {
  control::JointFeedback fb;
  fb.v = b.odometry.v;
  fb.gamma_rate = b.odometry.gamma_rate;
  fb.lift = b.joints.lift;
  fb.shift = b.joints.shift;
  fb.tilt = b.joints.beta;
  return fb;
}

using DetectFn =
    std::function<Pose2D(const world::WorldState&, const world::PalletGroundTruth&)>;
using ScriptFn = std::function<void(Blackboard&, double)>;

// Closed loop mission run at 100 Hz control / 10 Hz mission rate with the
// ground truth standing in for the estimator. Pallets in the pickup zone
// (x > 3) are fed as candidates through detect (which may bias them).
BtStatus run_mission(world::World& w, Mission& m, const mapping::CostMap& cm,
                     double max_time, const DetectFn& detect,
                     const ScriptFn& script = {}) {
  control::InnerLoop inner = make_inner(w.params());
  world::SensorBundle b = w.step(control::Commands{}, 0.01);
  Blackboard bb;
  bb.costmap = cm;
  bb.track_set_stable = true;
  const double dt = 0.01;
  BtStatus status = BtStatus::Running;
  int k = 0;
  for (double t = 0.0; t < max_time && status == BtStatus::Running;
       t += dt, ++k) {
    bb.time = t;
    bb.state = w.state().vehicle;
    bb.vehicle_z = w.vehicle_z();
    bb.p_l = b.lift_pressure;
    bb.confirmed_pallets.clear();
    for (const auto& p : w.state().pallets)
      if (!p.carried && p.pose.x > 3.0)
        bb.confirmed_pallets.push_back({p.id, detect(w.state(), p), p.z});
    bb.insertion_signal = false;
    if (w.state().carried_pallet < 0)
      for (const auto& p : w.state().pallets)
        if (world::insertion_depth(w.state().vehicle, p, w.params()) >= 0.99)
          bb.insertion_signal = true;
    if (script) script(bb, t);
    if (k % 10 == 0) status = m.tick(bb);
    const control::InnerLoopSetpoints sp = m.control_step(bb, dt);
    const control::Commands u = inner.step(sp, feedback(b), dt);
    b = w.step(u, dt);
  }
  return status;
}

Pose2D truth_detect(const world::WorldState&,
                    const world::PalletGroundTruth& p) {
  return p.pose;
}

// Detection biased 0.2 m to the side until the fork tips close within 0.5 m
// of the face; the late truth arrives after the realignment window.
Pose2D biased_detect(const world::WorldState& st,
                     const world::PalletGroundTruth& p) {
  const auto tip = vehicle::fork_tip_pose(st.vehicle, {});
  if (p.pose.inverse_transform(tip.pose.position()).x > 0.5) {
    const Vec2 off = p.pose.transform({0.0, 0.2});
    return Pose2D{off.x, off.y, p.pose.theta};
  }
  return p.pose;
}

world::WorldState two_pallet_scene() {
  world::WorldState ws;
  ws.rng_seed = 21;
  ws.vehicle.front = Pose2D{0.0, -5.0, kPi / 2.0};
  ws.vehicle.lift = 0.03;
  world::PalletGroundTruth pal;
  pal.id = 1;
  pal.mass_kg = 300.0;
  pal.pose = Pose2D{6.0, 2.0, 0.0};
  ws.pallets.push_back(pal);
  pal.id = 2;
  pal.pose = Pose2D{6.0, -2.0, 0.0};
  ws.pallets.push_back(pal);
  return ws;
}

MissionSpec ground_mission() {
  MissionSpec spec;
  spec.mode = MissionSpec::Mode::GroundToGround;
  spec.pallet_count = -1;
  spec.home = Pose2D{0.0, -5.0, kPi / 2.0};
  spec.observe_pose = Pose2D{10.0, 0.0, kPi / 2.0};
  spec.ground_slots = {Pose2D{-6.0, 2.0, kPi}, Pose2D{-6.0, -2.0, kPi}};
  return spec;
}

world::WorldParams quiet_params() {
  world::WorldParams wp;
  wp.lidar_period = 1.0e9;  // the truth-fed tests never read the clouds
  return wp;
}

}  // namespace

TEST_CASE("ground-to-ground mission transports every pallet to its slot") {
  world::World w(two_pallet_scene(), quiet_params(), world::NoiseProfile::none());
  Mission m(ground_mission(), TaskingParams{});

  const BtStatus s = run_mission(w, m, free_map(), 600.0, truth_detect);
  REQUIRE(s == BtStatus::Success);
  CHECK(m.completed_cycles() == 2);
  CHECK(m.interventions().empty());
  CHECK(w.state().carried_pallet == -1);

  // Each pallet ended up at a distinct slot, on the ground, aligned.
  const MissionSpec spec = ground_mission();
  std::vector<bool> used(spec.ground_slots.size(), false);
  for (const auto& p : w.state().pallets) {
    double best = 1e9;
    size_t best_i = 0;
    for (size_t i = 0; i < spec.ground_slots.size(); ++i) {
      const double d =
          (p.pose.position() - spec.ground_slots[i].position()).norm();
      if (d < best) {
        best = d;
        best_i = i;
      }
    }
    CHECK(best < 0.12);
    CHECK_FALSE(used[best_i]);
    used[best_i] = true;
    CHECK(std::abs(normalize_angle(
              p.pose.theta - spec.ground_slots[best_i].theta)) < 0.1);
    CHECK(p.z == doctest::Approx(0.0));
    CHECK_FALSE(p.carried);
  }

  // Phase order: two full cycles, the drain probe, then the drive home.
  std::vector<std::string> phases;
  for (const auto& [t, name] : m.phase_log()) phases.push_back(name);
  const std::vector<std::string> cycle = {"FindPallets",  "SelectPallet",
                                          "ApproachPallet", "LoadPallet",
                                          "ApproachSlot",  "UnloadPallet"};
  std::vector<std::string> expect;
  expect.insert(expect.end(), cycle.begin(), cycle.end());
  expect.insert(expect.end(), cycle.begin(), cycle.end());
  expect.push_back("FindPallets");
  expect.push_back("ReturnHome");
  CHECK(phases == expect);

  // The vehicle parked back home.
  CHECK((w.state().vehicle.front.position() - spec.home.position()).norm() <
        0.5);
}

TEST_CASE("aborted pick recovers, retries, and succeeds on the second "
          "attempt") {
  world::WorldState ws = two_pallet_scene();
  ws.pallets.resize(1);
  world::World w(ws, quiet_params(), world::NoiseProfile::none());
  MissionSpec spec = ground_mission();
  spec.pallet_count = 1;
  Mission m(spec, TaskingParams{});

  // First attempt sees the biased detection and aborts at the gate; the
  // retry after the back-out gets the true pose.
  const DetectFn detect = [&m](const world::WorldState& st,
                               const world::PalletGroundTruth& p) {
    return m.pick_attempts() < 2 ? biased_detect(st, p) : truth_detect(st, p);
  };
  const BtStatus s = run_mission(w, m, free_map(), 600.0, detect);
  REQUIRE(s == BtStatus::Success);
  CHECK(m.pick_attempts() == 2);
  CHECK(m.completed_cycles() == 1);
  CHECK(m.interventions().empty());
  CHECK((w.state().pallets[0].pose.position() -
         spec.ground_slots[0].position())
            .norm() < 0.12);
}

TEST_CASE("exhausted pick retries raise an operator intervention and fail "
          "the mission") {
  world::WorldState ws = two_pallet_scene();
  ws.pallets.resize(1);
  world::World w(ws, quiet_params(), world::NoiseProfile::none());
  MissionSpec spec = ground_mission();
  spec.pallet_count = 1;
  TaskingParams params;
  Mission m(spec, params);

  const BtStatus s = run_mission(w, m, free_map(), 600.0, biased_detect);
  REQUIRE(s == BtStatus::Failure);
  CHECK(m.pick_attempts() == 1 + params.n_retry);
  CHECK(m.completed_cycles() == 0);
  REQUIRE(m.interventions().size() == 1);
  CHECK(m.interventions()[0].kind == InterventionKind::Manipulation);
  CHECK(m.interventions()[0].severity == InterventionSeverity::Operator);
  CHECK(w.state().carried_pallet == -1);
}

TEST_CASE("collision warning holds the vehicle until the worker clears it") {
  world::WorldState ws = two_pallet_scene();
  ws.pallets.resize(1);
  world::World w(ws, quiet_params(), world::NoiseProfile::none());
  MissionSpec spec = ground_mission();
  spec.pallet_count = 1;
  Mission m(spec, TaskingParams{});

  double max_speed_in_hold = 0.0;
  const ScriptFn script = [&](Blackboard& bb, double t) {
    bb.collision_warning = t >= 3.0 && t < 3.05;
    bb.operator_clear = t >= 7.0;
    if (t >= 5.5 && t < 6.5)
      max_speed_in_hold = std::max(max_speed_in_hold, std::abs(bb.state.v));
  };
  run_mission(w, m, free_map(), 20.0, truth_detect, script);

  REQUIRE(m.interventions().size() == 1);
  const Intervention& iv = m.interventions()[0];
  CHECK(iv.kind == InterventionKind::CollisionDetection);
  CHECK(iv.severity == InterventionSeverity::Worker);
  CHECK(iv.duration == doctest::Approx(4.0).epsilon(0.02));
  CHECK(max_speed_in_hold < 0.05);
  CHECK_FALSE(m.collision_held());
  CHECK(std::string(to_string(iv.kind)) == "CollisionDetection");
  CHECK(std::string(to_string(iv.severity)) == "Worker");
}
