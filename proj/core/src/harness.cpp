#include "forksim/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

#include "forksim/estimation.hpp"
#include "forksim/perception.hpp"

namespace forksim::harness {

namespace {

namespace fs = std::filesystem;

std::string mode_name(tasking::MissionSpec::Mode mode) {
  switch (mode) {
    case tasking::MissionSpec::Mode::GroundToGround: return "G2G";
    case tasking::MissionSpec::Mode::GroundToTruck: return "G2T";
    case tasking::MissionSpec::Mode::TruckToGround: return "T2G";
  }
  return "G2G";
}

std::string status_name(tasking::BtStatus s) {
  switch (s) {
    case tasking::BtStatus::Success: return "Success";
    case tasking::BtStatus::Failure: return "Failure";
    case tasking::BtStatus::Running: return "Running";
  }
  return "Running";
}

// Incremental pose estimate: factor graph at the estimation rate, odometry
// dead reckoning in between so the control loop never consumes a stale pose.
class Estimator {
 public:
  Estimator(const Pose2D& start, const vehicle::VehicleParams& vp,
            const world::NoiseProfile& noise)
      : vp_(vp), noise_(noise) {
    last_var_ = graph_.add_pose_variable(0.0, start);
    Eigen::Matrix3d prior = Eigen::Matrix3d::Identity() * 1e-6;
    graph_.add_gnss(last_var_,
                    Eigen::Vector3d(start.x, start.y, start.theta), prior,
                    0.0);
    estimates_ = graph_.optimize();
    anchor_ = start;
  }

  // Control-rate odometry accumulation.
  void integrate(const world::Odometry& odo, double dt) {
    const double thdot =
        (odo.v * std::sin(odo.gamma) + odo.gamma_rate * vp_.l_r) /
        (vp_.l_f * std::cos(odo.gamma) + vp_.l_r);
    window_.x += odo.v * std::cos(window_.theta) * dt;
    window_.y += odo.v * std::sin(window_.theta) * dt;
    window_.theta = normalize_angle(window_.theta + thdot * dt);
    window_span_ += std::abs(odo.v) * dt;
  }

  // Estimation-rate update; detections are relative measurements taken at
  // the current true camera pose.
  void update(double t, const std::optional<world::GnssFix>& gnss,
              const std::vector<estimation::PalletDetectionMeas>& detections,
              const Pose2D& frustum_pose) {
    const double dsig = std::max(noise_.odom_v_sigma, 1e-3);
    const double asig = std::max(noise_.odom_gamma_sigma, 1e-3);
    Eigen::Matrix3d odo_cov = Eigen::Matrix3d::Zero();
    odo_cov(0, 0) = odo_cov(1, 1) = std::pow(dsig * (window_span_ + 0.1), 2);
    odo_cov(2, 2) = std::pow(asig * (window_span_ + 0.1) + 1e-4, 2);
    last_var_ = graph_.add_odometry(last_var_, t, window_, odo_cov);
    window_ = Pose2D{};
    window_span_ = 0.0;

    if (gnss) {
      const double psig = std::max(noise_.gnss_xy_sigma, 1e-3);
      const double hsig = std::max(noise_.gnss_heading_sigma, 1e-3);
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      cov(0, 0) = cov(1, 1) = psig * psig;
      cov(2, 2) = hsig * hsig;
      graph_.add_gnss(last_var_,
                      Eigen::Vector3d(gnss->x, gnss->y, gnss->heading), cov,
                      t);
    }

    std::vector<estimation::VarId> associated;
    for (const auto& det : detections) {
      const auto res =
          graph_.associate_detection(estimates_, last_var_, det, t);
      if (res.kind != estimation::AssociationResult::Kind::Rejected &&
          res.pallet_var >= 0)
        associated.push_back(res.pallet_var);
    }

    estimates_ = graph_.optimize();
    graph_.bookkeeping(estimates_, frustum_pose, frustum(), associated, t);
    graph_.prune_and_cull(t);

    const auto it = estimates_.poses.find(last_var_);
    if (it != estimates_.poses.end()) anchor_ = it->second;

    // Track-set stability: the confirmed id set has not changed for a while.
    std::vector<estimation::VarId> confirmed = graph_.confirmed_pallets();
    std::sort(confirmed.begin(), confirmed.end());
    if (confirmed != stable_set_) {
      stable_set_ = std::move(confirmed);
      stable_since_ = t;
    }
    last_update_ = t;
  }

  Pose2D pose() const { return anchor_.compose(window_); }

  bool track_set_stable() const {
    return last_update_ - stable_since_ >= 1.0;
  }

  std::vector<tasking::PalletCandidate> confirmed_candidates() const {
    std::vector<tasking::PalletCandidate> out;
    for (estimation::VarId id : graph_.confirmed_pallets()) {
      const auto p = estimates_.poses.find(id);
      if (p == estimates_.poses.end()) continue;
      tasking::PalletCandidate c;
      c.id = id;
      c.pose = p->second;
      const auto z = estimates_.pallet_z.find(id);
      c.z = z != estimates_.pallet_z.end() ? z->second : 0.0;
      out.push_back(c);
    }
    return out;
  }

 private:
  // Camera frustum in the vehicle frame for in-view miss counting.
  static std::vector<Vec2> frustum() {
    return {{0.3, -0.3}, {8.0, -6.5}, {8.0, 6.5}, {0.3, 0.3}};
  }

  vehicle::VehicleParams vp_;
  world::NoiseProfile noise_;
  estimation::FactorGraph graph_;
  estimation::Estimates estimates_;
  estimation::VarId last_var_ = -1;
  Pose2D anchor_;
  Pose2D window_;  // dead-reckoned delta since the last graph pose
  double window_span_ = 0.0;
  std::vector<estimation::VarId> stable_set_;
  double stable_since_ = 0.0;
  double last_update_ = -1.0;
};

world::WorldState build_world_state(const ScenarioConfig& cfg) {
  world::WorldState ws;
  ws.rng_seed = cfg.seed;
  ws.vehicle.front = cfg.mission.home;
  ws.vehicle.lift = 0.03;
  for (const PalletSpec& p : cfg.world.pallets) {
    world::PalletGroundTruth pal;
    pal.id = p.id;
    pal.pose = p.pose;
    pal.z = p.z;
    pal.mass_kg = p.mass_kg;
    ws.pallets.push_back(pal);
  }
  const TruckSpec& t = cfg.world.truck;
  ws.truck.present = t.present;
  ws.truck.pose = t.pose;
  ws.truck.deck_height = t.deck_height;
  ws.truck.deck_length = t.deck_length;
  ws.truck.deck_width = t.deck_width;
  for (const ObstacleSpec& o : cfg.world.obstacles) {
    world::Obstacle ob;
    ob.id = static_cast<int>(ws.obstacles.size()) + 1;
    ob.center = o.center;
    ob.half_extents = o.half_extents;
    ob.height = o.height;
    ob.velocity = o.velocity;
    ws.obstacles.push_back(ob);
  }
  return ws;
}

// Remaining portion of the active path starting at the pose closest to the
// vehicle; the collision predictor measures conflict distance from the path
// start.
planning::Path remaining_path(const planning::Path& path,
                              const Pose2D& vehicle) {
  planning::Path out;
  if (path.poses.empty()) return out;
  size_t best = 0;
  double best_d2 = 1e18;
  for (size_t i = 0; i < path.poses.size(); ++i) {
    const double d2 =
        (path.poses[i].pose.position() - vehicle.position()).squared_norm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  out.poses.assign(path.poses.begin() + best, path.poses.end());
  return out;
}

// Obstacle truth in cluster form: the runner stands in for the scan
// clustering stage so mission runs stay within the wall-clock budget; the
// cluster/tracker math itself is what gets exercised downstream.
std::vector<perception::ObstacleCluster> synth_clusters(
    const world::WorldState& ws, const Pose2D& vehicle) {
  std::vector<perception::ObstacleCluster> clusters;
  for (const world::Obstacle& o : ws.obstacles) {
    if ((o.center - vehicle.position()).norm() > 20.0) continue;
    perception::ObstacleCluster c;
    c.centroid = {o.center.x, o.center.y, o.height / 2.0};
    c.min_corner = {o.center.x - o.half_extents.x,
                    o.center.y - o.half_extents.y, 0.0};
    c.max_corner = {o.center.x + o.half_extents.x,
                    o.center.y + o.half_extents.y, o.height};
    c.point_count = 40;
    clusters.push_back(c);
  }
  return clusters;
}

void append_plan_if_new(RunLogs& logs, const planning::Path* path, double t) {
  if (!path || path->poses.empty()) return;
  if (!logs.plans.empty()) {
    const planning::Path& last = logs.plans.back().path;
    if (last.poses.size() == path->poses.size() &&
        std::abs(last.cost - path->cost) < 1e-12)
      return;
  }
  PlannedPath pp;
  pp.id = static_cast<int>(logs.plans.size());
  pp.t = t;
  pp.path = *path;
  logs.plans.push_back(std::move(pp));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out.push_back('\\');
      out.push_back(c);
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string intervention_json(const tasking::Intervention& iv) {
  std::ostringstream os;
  os << "{\"time\":" << format_double(iv.time) << ",\"kind\":\""
     << tasking::to_string(iv.kind) << "\",\"severity\":\""
     << tasking::to_string(iv.severity) << "\",\"duration\":"
     << format_double(iv.duration) << ",\"note\":\"" << json_escape(iv.note)
     << "\"}";
  return os.str();
}

}  // namespace

RunResult run_scenario(const ScenarioConfig& cfg_in) {
  ScenarioConfig cfg = cfg_in;
  {
    std::vector<ConfigError> errors = validate_scenario(cfg);
    if (errors.empty()) errors = materialize_pallets(cfg);
    if (!errors.empty())
      throw std::invalid_argument(errors.front().field + ": " +
                                  errors.front().message);
  }

  const world::NoiseProfile noise = noise_profile(cfg.noise);
  world::WorldParams wp;
  wp.lidar_period = 1e9;  // clouds are sampled on demand
  world::World world(build_world_state(cfg), wp, noise);

  tasking::TaskingParams tp;
  tasking::Mission mission(cfg.mission, tp);

  RunResult result;
  result.costmap = static_costmap(cfg);

  RunLogs& logs = result.logs;
  logs.mode = mode_name(cfg.mission.mode);
  logs.seed = cfg.seed;
  logs.dt = cfg.dt;

  control::InnerLoop inner;
  inner.drive.model = wp.drive;
  inner.steer.model = wp.steer;
  inner.lift.model = wp.lift;
  inner.shift.model = wp.shift;
  inner.tilt.model = wp.tilt;

  Estimator estimator(cfg.mission.home, tp.vp, noise);
  std::mt19937_64 detect_rng(cfg.seed ^ 0xc2b2ae3d27d4eb4full);

  const ZoneSpec* pickup = nullptr;
  for (const ZoneSpec& z : cfg.world.zones)
    if (z.name == cfg.pickup_zone) pickup = &z;

  tasking::Blackboard bb;
  bb.costmap = result.costmap;

  std::vector<perception::ObstacleTrack> tracks;
  std::vector<perception::Slot> truck_slots;
  int slots_placed = 0;
  double hold_start = -1.0;

  const int est_every = std::max(1, static_cast<int>(std::lround(0.1 / cfg.dt)));
  const double est_dt = est_every * cfg.dt;

  world::SensorBundle bundle = world.step(control::Commands{}, cfg.dt);
  tasking::BtStatus status = tasking::BtStatus::Running;
  double t = 0.0;
  int step = 0;

  while (t < cfg.time_limit && status == tasking::BtStatus::Running) {
    estimator.integrate(bundle.odometry, cfg.dt);

    if (step % est_every == 0) {
      const Pose2D truth_front = world.state().vehicle.front;

      // Pallet detections: everything visible and not on the forks.
      std::vector<perception::PalletTruth> truths;
      for (size_t i = 0; i < world.state().pallets.size(); ++i) {
        if (static_cast<int>(i) == world.state().carried_pallet) continue;
        const auto& pal = world.state().pallets[i];
        truths.push_back({pal.id, pal.pose, pal.z});
      }
      const auto detections = perception::synth_pallet_detect(
          truths, truth_front, noise.detection, detect_rng);
      estimator.update(t, bundle.gnss, detections, estimator.pose());

      // Obstacle tracking and collision prediction on the active path.
      tracks = perception::track_obstacles(
          tracks, synth_clusters(world.state(), truth_front), est_dt);
      bb.collision_warning = false;
      if (const planning::Path* path = mission.active_path()) {
        const auto warnings = perception::predict_collision(
            tracks, remaining_path(*path, estimator.pose()), tp.vp,
            std::abs(bundle.odometry.v), 1.0, 2.0);
        for (const auto& w : warnings)
          if (w.within_stopping_envelope) bb.collision_warning = true;
      }

      // Loading edge detection once the truck face is in view (G2T only).
      if (cfg.mission.mode == tasking::MissionSpec::Mode::GroundToTruck &&
          truck_slots.empty() && world.state().truck.present) {
        const Pose2D& tpose = world.state().truck.pose;
        const Vec2 rel = estimator.pose().inverse_transform(tpose.position());
        if (std::hypot(rel.x, rel.y) < 14.0 && rel.x > 0.0 &&
            std::abs(std::atan2(rel.y, rel.x)) < 1.0) {
          const Pose2D sensor_tf =
              world.state().vehicle.front.compose(wp.front_lidar.mount);
          auto cloud = world.lidar_sample(wp.front_lidar, false,
                                          wp.front_lidar.max_range);
          // The scan is sensor-relative in z; the edge detector works in
          // ground-frame heights.
          const double oz = world.vehicle_z() + wp.front_lidar.mount_z;
          for (auto& p : cloud) p.z += oz;
          const auto edge = perception::detect_loading_edge(cloud, sensor_tf);
          if (edge.status == perception::EdgeStatus::Ok)
            truck_slots = perception::slots_from_pattern(
                edge.frame, cfg.world.truck.slot_pattern);
          if (std::getenv("FORKSIM_DEBUG")) {
            std::printf("edge status=%d origin=(%.2f,%.2f,%.2f)\n",
                        (int)edge.status, edge.frame.origin.x,
                        edge.frame.origin.y, edge.frame.origin.z);
            for (auto& s : truck_slots)
              std::printf("slot %d (%.2f,%.2f,%.2f) z=%.2f\n", s.index,
                          s.pose.x, s.pose.y, s.pose.theta, s.z);
          }
        }
      }
      // Occupancy bookkeeping from the mission's own completed placements.
      if (cfg.mission.mode == tasking::MissionSpec::Mode::GroundToTruck &&
          mission.completed_cycles() > slots_placed) {
        slots_placed = mission.completed_cycles();
        double best = 1e18;
        perception::Slot* hit = nullptr;
        for (auto& s : truck_slots) {
          const double d =
              (s.pose.position() - mission.active_slot().position()).norm();
          if (!s.occupied && d < best) {
            best = d;
            hit = &s;
          }
        }
        if (hit) hit->occupied = true;
      }
      bb.truck_slots = truck_slots;

      bb.confirmed_pallets.clear();
      for (const auto& cand : estimator.confirmed_candidates())
        if (!pickup || point_in_zone(*pickup, cand.pose.position()))
          bb.confirmed_pallets.push_back(cand);
      bb.track_set_stable = estimator.track_set_stable();
    }

    bb.time = t;
    bb.state.front = estimator.pose();
    bb.state.gamma = bundle.joints.gamma;
    bb.state.beta = bundle.joints.beta;
    bb.state.lift = bundle.joints.lift;
    bb.state.shift = bundle.joints.shift;
    bb.state.v = bundle.odometry.v;
    bb.vehicle_z = world.vehicle_z();
    bb.p_l = bundle.lift_pressure;
    bb.insertion_signal = false;
    if (world.state().carried_pallet < 0)
      for (const auto& pal : world.state().pallets)
        if (world::insertion_depth(world.state().vehicle, pal,
                                   world.params()) >= 0.99)
          bb.insertion_signal = true;

    // Scripted worker confirmation: the button is pressed a fixed delay
    // after the hold begins.
    if (mission.collision_held()) {
      if (hold_start < 0.0) hold_start = t;
      bb.operator_clear = t - hold_start >= cfg.clearance_delay;
    } else {
      hold_start = -1.0;
      bb.operator_clear = false;
    }

    if (step % est_every == 0) {
      status = mission.tick(bb);
      append_plan_if_new(logs, mission.active_path(), t);
    }

    const control::InnerLoopSetpoints sp = mission.control_step(bb, cfg.dt);
    control::JointFeedback fb;
    fb.v = bundle.odometry.v;
    fb.gamma_rate = bundle.odometry.gamma_rate;
    fb.lift = bundle.joints.lift;
    fb.shift = bundle.joints.shift;
    fb.tilt = bundle.joints.beta;
    const control::Commands u = inner.step(sp, fb, cfg.dt);

    const auto& truth = world.state();
    TrajectoryRow tr;
    tr.t = t;
    tr.x = truth.vehicle.front.x;
    tr.y = truth.vehicle.front.y;
    tr.theta = truth.vehicle.front.theta;
    tr.gamma = truth.vehicle.gamma;
    tr.v = truth.vehicle.v;
    tr.lift = truth.vehicle.lift;
    tr.shift = truth.vehicle.shift;
    tr.carried = truth.carried_pallet >= 0
                     ? truth.pallets[truth.carried_pallet].id
                     : -1;
    const Pose2D est = bb.state.front;
    tr.est_x = est.x;
    tr.est_y = est.y;
    tr.est_theta = est.theta;
    logs.trajectory.push_back(tr);

    ControlRow cr;
    cr.t = t;
    cr.v_d = sp.v_d;
    cr.gamma_rate_d = sp.gamma_rate_d;
    cr.lift_d = sp.fork.lift;
    cr.shift_d = sp.fork.shift;
    cr.tilt_d = sp.fork.tilt;
    cr.u_v = u.u_v;
    cr.u_gamma = u.u_gamma;
    cr.u_lift = u.u_lift;
    cr.u_shift = u.u_shift;
    cr.u_tilt = u.u_tilt;
    logs.control.push_back(cr);

    bundle = world.step(u, cfg.dt);
    if (std::getenv("FORKSIM_DEBUG") && step % 100 == 0 &&
        mission.active_phase() == "UnloadPallet") {
      const auto tip = vehicle::fork_tip_pose(world.state().vehicle,
                                              world.params().vehicle);
      const int ci = world.state().carried_pallet;
      std::printf(
          "t=%.1f tip=(%.2f,%.2f,%.2f) lift=%.2f p_l=%.1f carried=%d", t,
          tip.pose.x, tip.pose.y, tip.pose.theta,
          world.state().vehicle.lift, bundle.lift_pressure, ci);
      if (ci >= 0) {
        const auto& pal = world.state().pallets[ci];
        std::printf(" pal=(%.2f,%.2f,%.2f) z=%.2f sup=%.2f", pal.pose.x,
                    pal.pose.y, pal.pose.theta, pal.z,
                    world::support_height(world.state(), world.params(),
                                          pal.pose.x - 0.65 * std::cos(pal.pose.theta),
                                          pal.pose.y - 0.65 * std::sin(pal.pose.theta)));
      }
      std::printf("\n");
    }
    t += cfg.dt;
    step += 1;
  }

  result.status = status;
  result.timed_out = status == tasking::BtStatus::Running;

  logs.end_time = t;
  logs.status = status_name(status);
  logs.timed_out = result.timed_out;
  logs.cycles_completed = mission.completed_cycles();
  logs.pick_attempts = mission.total_pick_attempts();
  for (const auto& [pt, name] : mission.phase_log())
    logs.phases.push_back({pt, name});
  logs.interventions = mission.interventions();

  result.metrics = compute_metrics(logs);
  return result;
}

MetricsReport compute_metrics(const RunLogs& logs) {
  MetricsReport r;
  r.version = logs.version;
  r.mode = logs.mode;
  r.seed = logs.seed;
  r.timed_out = logs.timed_out;
  r.success = logs.status == "Success" && !logs.timed_out;
  r.cycles_completed = logs.cycles_completed;
  r.pick_attempts = logs.pick_attempts;
  r.total_time = logs.end_time;
  r.interventions = logs.interventions;

  const double dt = logs.dt;
  for (size_t i = 1; i < logs.trajectory.size(); ++i) {
    const double gap = logs.trajectory[i].t - logs.trajectory[i - 1].t;
    if (std::abs(gap - dt) > 1e-6)
      throw std::runtime_error("gap in trajectory log at t=" +
                               format_double(logs.trajectory[i - 1].t));
  }

  for (size_t i = 0; i < logs.trajectory.size(); ++i) {
    const TrajectoryRow& row = logs.trajectory[i];
    if (std::abs(row.v) < kStandstillSpeed)
      r.standstill_time += dt;
    else
      r.driving_time += dt;
    if (i > 0)
      r.distance += std::hypot(row.x - logs.trajectory[i - 1].x,
                               row.y - logs.trajectory[i - 1].y);
  }

  // Submission attribution: each phase owns the time from its entry to the
  // next entry (or the end of the run).
  std::vector<std::string> order;
  std::map<std::string, double> totals;
  for (size_t i = 0; i < logs.phases.size(); ++i) {
    const double t0 = logs.phases[i].t;
    const double t1 =
        i + 1 < logs.phases.size() ? logs.phases[i + 1].t : logs.end_time;
    const std::string& name = logs.phases[i].phase;
    if (!totals.count(name)) order.push_back(name);
    totals[name] += t1 - t0;
  }
  for (const std::string& name : order)
    r.submission_totals.emplace_back(name, totals[name]);

  // A transport cycle spans one FindPallets entry to the next phase-log
  // FindPallets (or the end); only spans that reach UnloadPallet count.
  std::vector<size_t> cycle_starts;
  for (size_t i = 0; i < logs.phases.size(); ++i)
    if (logs.phases[i].phase == "FindPallets") cycle_starts.push_back(i);
  int index = 0;
  for (size_t s = 0; s < cycle_starts.size(); ++s) {
    const size_t first = cycle_starts[s];
    const size_t last = s + 1 < cycle_starts.size()
                            ? cycle_starts[s + 1]
                            : logs.phases.size();
    bool has_unload = false;
    for (size_t i = first; i < last; ++i)
      if (logs.phases[i].phase == "UnloadPallet") has_unload = true;
    if (!has_unload) continue;

    CycleMetrics c;
    c.index = index++;
    c.start = logs.phases[first].t;
    c.end = last < logs.phases.size() ? logs.phases[last].t : logs.end_time;
    c.cycle_time = c.end - c.start;
    for (size_t i = first; i < last; ++i) {
      const double t1 = i + 1 < logs.phases.size() ? logs.phases[i + 1].t
                                                   : logs.end_time;
      c.submissions.emplace_back(logs.phases[i].phase,
                                 t1 - logs.phases[i].t);
    }
    for (const TrajectoryRow& row : logs.trajectory) {
      if (row.t < c.start || row.t >= c.end) continue;
      if (std::abs(row.v) < kStandstillSpeed)
        c.standstill += dt;
      else
        c.driving += dt;
    }
    bool prev_valid = false;
    double px = 0.0, py = 0.0;
    for (const TrajectoryRow& row : logs.trajectory) {
      if (row.t < c.start || row.t >= c.end) continue;
      if (prev_valid) c.distance += std::hypot(row.x - px, row.y - py);
      px = row.x;
      py = row.y;
      prev_valid = true;
    }
    r.cycles.push_back(std::move(c));
  }

  // Intervention counts by kind x severity, in enum order.
  std::map<std::pair<std::string, std::string>, int> counts;
  for (const auto& iv : logs.interventions)
    counts[{tasking::to_string(iv.kind), tasking::to_string(iv.severity)}] += 1;
  for (const auto& [key, n] : counts)
    r.intervention_counts.push_back({key.first, key.second, n});
  return r;
}

std::string metrics_to_json(const MetricsReport& r) {
  std::ostringstream os;
  os << "{\n";
  os << "  \"version\": " << r.version << ",\n";
  os << "  \"mode\": \"" << r.mode << "\",\n";
  os << "  \"seed\": " << r.seed << ",\n";
  os << "  \"success\": " << (r.success ? "true" : "false") << ",\n";
  os << "  \"timed_out\": " << (r.timed_out ? "true" : "false") << ",\n";
  os << "  \"cycles_completed\": " << r.cycles_completed << ",\n";
  os << "  \"pick_attempts\": " << r.pick_attempts << ",\n";
  os << "  \"total_time\": " << format_double(r.total_time) << ",\n";
  os << "  \"driving_time\": " << format_double(r.driving_time) << ",\n";
  os << "  \"standstill_time\": " << format_double(r.standstill_time)
     << ",\n";
  os << "  \"distance\": " << format_double(r.distance) << ",\n";
  os << "  \"cycles\": [";
  for (size_t i = 0; i < r.cycles.size(); ++i) {
    const CycleMetrics& c = r.cycles[i];
    os << (i ? ",\n    " : "\n    ");
    os << "{\"index\": " << c.index << ", \"start\": "
       << format_double(c.start) << ", \"end\": " << format_double(c.end)
       << ", \"cycle_time\": " << format_double(c.cycle_time)
       << ", \"driving\": " << format_double(c.driving)
       << ", \"standstill\": " << format_double(c.standstill)
       << ", \"distance\": " << format_double(c.distance)
       << ", \"submissions\": [";
    for (size_t k = 0; k < c.submissions.size(); ++k) {
      os << (k ? ", " : "") << "{\"phase\": \"" << c.submissions[k].first
         << "\", \"seconds\": " << format_double(c.submissions[k].second)
         << "}";
    }
    os << "]}";
  }
  os << (r.cycles.empty() ? "]" : "\n  ]") << ",\n";
  os << "  \"submission_totals\": [";
  for (size_t i = 0; i < r.submission_totals.size(); ++i) {
    os << (i ? ", " : "") << "{\"phase\": \"" << r.submission_totals[i].first
       << "\", \"seconds\": " << format_double(r.submission_totals[i].second)
       << "}";
  }
  os << "],\n";
  os << "  \"interventions\": [";
  for (size_t i = 0; i < r.interventions.size(); ++i)
    os << (i ? ", " : "") << intervention_json(r.interventions[i]);
  os << "],\n";
  os << "  \"intervention_counts\": [";
  for (size_t i = 0; i < r.intervention_counts.size(); ++i) {
    const InterventionCount& c = r.intervention_counts[i];
    os << (i ? ", " : "") << "{\"kind\": \"" << c.kind
       << "\", \"severity\": \"" << c.severity << "\", \"count\": " << c.count
       << "}";
  }
  os << "]\n}\n";
  return os.str();
}

void write_artifacts(const RunResult& result, const std::string& out_dir) {
  const fs::path dir(out_dir);
  std::error_code ec;
  fs::create_directories(dir / "maps", ec);
  if (ec) throw std::runtime_error("cannot create " + out_dir);

  const auto open = [](const fs::path& p) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    return f;
  };

  {
    std::ofstream f = open(dir / "metrics.json");
    f << metrics_to_json(result.metrics);
  }
  {
    std::ofstream f = open(dir / "trajectory.csv");
    f << "# forksim-log v" << result.logs.version << "\n";
    f << "t,x,y,theta,gamma,v,lift,shift,carried,est_x,est_y,est_theta\n";
    char buf[320];
    for (const TrajectoryRow& r : result.logs.trajectory) {
      std::snprintf(buf, sizeof(buf),
                    "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%d,%.6f,%.6f,"
                    "%.6f\n",
                    r.t, r.x, r.y, r.theta, r.gamma, r.v, r.lift, r.shift,
                    r.carried, r.est_x, r.est_y, r.est_theta);
      f << buf;
    }
  }
  {
    std::ofstream f = open(dir / "control.csv");
    f << "# forksim-log v" << result.logs.version << "\n";
    f << "t,v_d,gamma_rate_d,lift_d,shift_d,tilt_d,u_v,u_gamma,u_lift,"
         "u_shift,u_tilt\n";
    char buf[320];
    for (const ControlRow& r : result.logs.control) {
      std::snprintf(buf, sizeof(buf),
                    "%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                    r.t, r.v_d, r.gamma_rate_d, r.lift_d, r.shift_d, r.tilt_d,
                    r.u_v, r.u_gamma, r.u_lift, r.u_shift, r.u_tilt);
      f << buf;
    }
  }
  {
    std::ofstream f = open(dir / "phases.csv");
    f << "# forksim-log v" << result.logs.version << "\n";
    f << "t,phase\n";
    for (const PhaseRow& r : result.logs.phases)
      f << format_double(r.t) << "," << r.phase << "\n";
  }
  {
    std::ofstream f = open(dir / "interventions.jsonl");
    for (const auto& iv : result.logs.interventions)
      f << intervention_json(iv) << "\n";
  }
  {
    std::ofstream f = open(dir / "plans.csv");
    f << "# forksim-log v" << result.logs.version << "\n";
    f << "plan_id,t,seq,x,y,theta,reverse,curvature\n";
    char buf[200];
    for (const PlannedPath& p : result.logs.plans) {
      for (size_t i = 0; i < p.path.poses.size(); ++i) {
        const planning::PathPose& pp = p.path.poses[i];
        std::snprintf(buf, sizeof(buf), "%d,%.6f,%zu,%.6f,%.6f,%.6f,%d,%.6f\n",
                      p.id, p.t, i, pp.pose.x, pp.pose.y, pp.pose.theta,
                      pp.reverse ? 1 : 0, pp.curvature);
        f << buf;
      }
    }
  }
  {
    std::ofstream f = open(dir / "maps" / "static.grid");
    f << result.costmap.to_pgm();
  }
}

namespace {

bool read_log_header(std::ifstream& f, const std::string& name,
                     std::string& error) {
  std::string line;
  if (!std::getline(f, line)) {
    error = name + ": empty file";
    return false;
  }
  const std::string expect = "# forksim-log v" + std::to_string(kLogVersion);
  if (line != expect) {
    error = name + ": unsupported log version (got '" + line + "')";
    return false;
  }
  std::getline(f, line);  // column header
  return true;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

bool replay_run(const std::string& in_dir, const std::string& out_dir,
                std::string& error) {
  const fs::path in(in_dir);
  std::ifstream traj(in / "trajectory.csv");
  if (!traj) {
    error = "missing trajectory.csv in " + in_dir;
    return false;
  }
  std::ifstream plans(in / "plans.csv");
  if (!plans) {
    error = "missing plans.csv in " + in_dir;
    return false;
  }
  std::ifstream phases(in / "phases.csv");
  if (!phases) {
    error = "missing phases.csv in " + in_dir;
    return false;
  }
  if (!read_log_header(traj, "trajectory.csv", error) ||
      !read_log_header(plans, "plans.csv", error) ||
      !read_log_header(phases, "phases.csv", error))
    return false;

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    error = "cannot create " + out_dir;
    return false;
  }

  std::ofstream overlay(fs::path(out_dir) / "overlay.csv");
  if (!overlay) {
    error = "cannot write overlay.csv";
    return false;
  }
  overlay << "kind,plan_id,seq,t,x,y,theta,reverse,boundary\n";

  // Planned rows; a boundary is the first pose of a plan or a driving
  // direction flip (segment switch).
  std::string line;
  int prev_plan = -1;
  int prev_reverse = -1;
  while (std::getline(plans, line)) {
    const auto f = split_csv(line);
    if (f.size() != 8) {
      error = "plans.csv: malformed row";
      return false;
    }
    const int plan_id = std::stoi(f[0]);
    const int reverse = std::stoi(f[6]);
    const bool boundary = plan_id != prev_plan || reverse != prev_reverse;
    overlay << "planned," << f[0] << "," << f[2] << "," << f[1] << "," << f[3]
            << "," << f[4] << "," << f[5] << "," << f[6] << ","
            << (boundary ? 1 : 0) << "\n";
    prev_plan = plan_id;
    prev_reverse = reverse;
  }

  size_t seq = 0;
  while (std::getline(traj, line)) {
    const auto f = split_csv(line);
    if (f.size() != 12) {
      error = "trajectory.csv: malformed row";
      return false;
    }
    overlay << "driven,-1," << seq++ << "," << f[0] << "," << f[1] << ","
            << f[2] << "," << f[3] << ",0,0\n";
  }

  std::ofstream timings(fs::path(out_dir) / "timings.csv");
  if (!timings) {
    error = "cannot write timings.csv";
    return false;
  }
  timings << "phase,t_start,t_end,seconds\n";
  std::vector<std::pair<double, std::string>> entries;
  while (std::getline(phases, line)) {
    const auto f = split_csv(line);
    if (f.size() != 2) {
      error = "phases.csv: malformed row";
      return false;
    }
    entries.emplace_back(std::stod(f[0]), f[1]);
  }
  double last_t = 0.0;
  if (!entries.empty()) {
    // The trajectory's final timestamp closes the last phase.
    last_t = entries.back().first;
    // reuse the driven rows' last t
  }
  for (size_t i = 0; i < entries.size(); ++i) {
    const double t0 = entries[i].first;
    const double t1 =
        i + 1 < entries.size() ? entries[i + 1].first : std::max(last_t, t0);
    timings << entries[i].second << "," << format_double(t0) << ","
            << format_double(t1) << "," << format_double(t1 - t0) << "\n";
  }
  return true;
}

}  // namespace forksim::harness
