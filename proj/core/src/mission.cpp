#include "forksim/mission.hpp"

#include <algorithm>
#include <cmath>

namespace forksim::tasking {

const char* to_string(InterventionKind k) {
  switch (k) {
    case InterventionKind::CollisionDetection:
      return "CollisionDetection";
    case InterventionKind::Manipulation:
      return "Manipulation";
    case InterventionKind::Navigation:
      return "Navigation";
  }
  return "?";
}

const char* to_string(InterventionSeverity s) {
  switch (s) {
    case InterventionSeverity::Worker:
      return "Worker";
    case InterventionSeverity::Operator:
      return "Operator";
    case InterventionSeverity::Engineer:
      return "Engineer";
  }
  return "?";
}

Pose2D pre_approach_pose(const Pose2D& target, double distance) {
  const Vec2 p = target.transform({distance, 0.0});
  return Pose2D{p.x, p.y, target.theta};
}

std::optional<SelectionResult> select_pallet(
    const std::vector<PalletCandidate>& candidates, const Pose2D& vehicle,
    const mapping::CostMap& costmap, const TaskingParams& params) {
  std::optional<SelectionResult> best;
  for (const auto& cand : candidates) {
    const Pose2D goal =
        pre_approach_pose(cand.pose, params.pre_approach_distance);
    const planning::PlanResult r =
        planning::plan(vehicle, goal, costmap, params.vp, params.planner);
    if (r.status != planning::PlanStatus::Ok) continue;
    const double len = r.path.length();
    if (!best || len < best->path_length ||
        (len == best->path_length && cand.id < best->id))
      best = SelectionResult{cand.id, len};
  }
  return best;
}

Mission::Mission(MissionSpec spec, TaskingParams params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  build_tree();
}

void Mission::build_tree() {
  std::vector<BtNode::Ptr> cycle;
  cycle.push_back(BtNode::action("FindPallets", [this] { return tick_find(); }));
  cycle.push_back(
      BtNode::action("SelectPallet", [this] { return tick_select(); }));
  cycle.push_back(BtNode::action("ApproachPallet",
                                 [this] { return tick_approach_pallet(); }));
  cycle.push_back(BtNode::action("LoadPallet", [this] { return tick_load(); }));
  cycle.push_back(BtNode::action("ApproachSlot",
                                 [this] { return tick_approach_slot(); }));
  cycle.push_back(
      BtNode::action("UnloadPallet", [this] { return tick_unload(); }));

  std::vector<BtNode::Ptr> mission;
  mission.push_back(BtNode::repeat(
      "transport", spec_.pallet_count,
      BtNode::sequence("cycle", std::move(cycle))));
  mission.push_back(
      BtNode::action("ReturnHome", [this] { return tick_return_home(); }));
  tree_ = BtNode::sequence("mission", std::move(mission));
}

void Mission::set_phase(const std::string& phase) {
  if (phase_ == phase) return;
  phase_ = phase;
  phase_log_.emplace_back(bb_ ? bb_->time : 0.0, phase);
}

void Mission::log_intervention(InterventionKind kind,
                               InterventionSeverity severity, double duration,
                               const std::string& note) {
  Intervention iv;
  iv.time = bb_ ? bb_->time : 0.0;
  iv.kind = kind;
  iv.severity = severity;
  iv.duration = duration;
  iv.note = note;
  interventions_.push_back(iv);
}

bool Mission::start_drive(const Pose2D& goal, double tol) {
  const planning::PlanResult r = planning::plan(
      bb_->state.front, goal, bb_->costmap, params_.vp, params_.planner);
  drive_failed_ = r.status != planning::PlanStatus::Ok;
  drive_done_ = false;
  drive_goal_ = goal;
  drive_tol_ = tol > 0.0 ? tol : params_.goal_pos_tol;
  replans_ = 0;
  segment_ = 0;
  steered_segment_ = static_cast<size_t>(-1);
  if (!drive_failed_) {
    path_ = r.path;
    activity_ = Activity::Drive;
  }
  return !drive_failed_;
}

BtStatus Mission::drive_status() const {
  if (drive_failed_) return BtStatus::Failure;
  if (drive_done_) return BtStatus::Success;
  return BtStatus::Running;
}

BtStatus Mission::tick_find() {
  set_phase("FindPallets");
  const double to_post =
      (bb_->state.front.position() - spec_.observe_pose.position()).norm();
  if (activity_ == Activity::Drive) {
    if (drive_status() == BtStatus::Running) return BtStatus::Running;
    activity_ = Activity::None;
    if (drive_status() == BtStatus::Failure) {
      log_intervention(InterventionKind::Navigation,
                       InterventionSeverity::Operator, 0.0,
                       "no path to the observation post");
      fatal_ = true;
      return BtStatus::Failure;
    }
  } else if (to_post > 2.0 * params_.goal_pos_tol + 0.1) {
    if (!start_drive(spec_.observe_pose, 2.0 * params_.goal_pos_tol)) {
      log_intervention(InterventionKind::Navigation,
                       InterventionSeverity::Operator, 0.0,
                       "no path to the observation post");
      fatal_ = true;
      return BtStatus::Failure;
    }
    return BtStatus::Running;
  }
  // Stop-and-observe dwell until the track set settles.
  activity_ = Activity::Dwell;
  if (!bb_->track_set_stable) return BtStatus::Running;
  activity_ = Activity::None;
  if (bb_->confirmed_pallets.empty()) return BtStatus::Failure;  // all moved
  return BtStatus::Success;
}

BtStatus Mission::tick_select() {
  set_phase("SelectPallet");
  if (bb_->confirmed_pallets.empty()) return BtStatus::Failure;
  const auto r = select_pallet(bb_->confirmed_pallets, bb_->state.front,
                               bb_->costmap, params_);
  if (!r) {
    log_intervention(InterventionKind::Navigation,
                     InterventionSeverity::Operator, 0.0,
                     "no accessible pallet among the candidates");
    fatal_ = true;
    return BtStatus::Failure;
  }
  for (const auto& cand : bb_->confirmed_pallets)
    if (cand.id == r->id) selected_ = cand;
  attempts_ = 0;
  return BtStatus::Success;
}

BtStatus Mission::tick_approach_pallet() {
  set_phase("ApproachPallet");
  if (activity_ != Activity::Drive) {
    // Refresh the target estimate before planning the approach.
    for (const auto& cand : bb_->confirmed_pallets)
      if (cand.id == selected_.id) selected_ = cand;
    if (!start_drive(pre_approach_pose(selected_.pose,
                                       params_.pre_approach_distance))) {
      log_intervention(InterventionKind::Navigation,
                       InterventionSeverity::Operator, 0.0,
                       "approach pose unreachable");
      fatal_ = true;
      return BtStatus::Failure;
    }
    return BtStatus::Running;
  }
  const BtStatus s = drive_status();
  if (s != BtStatus::Running) activity_ = Activity::None;
  if (s == BtStatus::Failure) {
    log_intervention(InterventionKind::Navigation,
                     InterventionSeverity::Operator, 0.0,
                     "approach pose unreachable");
    fatal_ = true;
  }
  return s;
}

BtStatus Mission::tick_load() {
  set_phase("LoadPallet");
  if (activity_ == Activity::Recover) {
    if (!recover_done_) return BtStatus::Running;
    activity_ = Activity::None;
  }
  if (!pick_) {
    attempts_ += 1;
    total_attempts_ += 1;
    pick_.emplace(params_.pick);
    activity_ = Activity::Pick;
    return BtStatus::Running;
  }
  switch (pick_->status()) {
    case manipulation::Status::Running:
      return BtStatus::Running;
    case manipulation::Status::Success:
      if (bb_->p_l < params_.loaded_pressure_min) {
        // Geometric insertion finished but the lift pressure says the forks
        // came up empty; treat it like an aborted attempt.
        pick_.reset();
        if (attempts_ > params_.n_retry) {
          log_intervention(InterventionKind::Manipulation,
                           InterventionSeverity::Operator, 0.0,
                           "pick retries exhausted");
          fatal_ = true;
          activity_ = Activity::None;
          return BtStatus::Failure;
        }
        activity_ = Activity::Recover;
        recover_done_ = false;
        return BtStatus::Running;
      }
      nominal_pressure_ = bb_->p_l;
      pick_.reset();
      activity_ = Activity::None;
      return BtStatus::Success;
    case manipulation::Status::Aborted: {
      pick_.reset();
      if (attempts_ > params_.n_retry) {
        log_intervention(InterventionKind::Manipulation,
                         InterventionSeverity::Operator, 0.0,
                         "pick retries exhausted");
        fatal_ = true;
        activity_ = Activity::None;
        return BtStatus::Failure;
      }
      activity_ = Activity::Recover;
      recover_done_ = false;
      return BtStatus::Running;
    }
    case manipulation::Status::Failed:
      log_intervention(InterventionKind::Manipulation,
                       InterventionSeverity::Operator, 0.0,
                       "pick failed: " + pick_->outcome().reason);
      pick_.reset();
      fatal_ = true;
      activity_ = Activity::None;
      return BtStatus::Failure;
  }
  return BtStatus::Running;
}

BtStatus Mission::tick_approach_slot() {
  set_phase("ApproachSlot");
  if (activity_ != Activity::Drive) {
    if (spec_.mode == MissionSpec::Mode::GroundToTruck) {
      const perception::Slot* free_slot = nullptr;
      for (const auto& s : bb_->truck_slots)
        if (!s.occupied && !free_slot) free_slot = &s;
      if (!free_slot) {
        log_intervention(InterventionKind::Navigation,
                         InterventionSeverity::Operator, 0.0,
                         "no free slot on the loading platform");
        fatal_ = true;
        return BtStatus::Failure;
      }
      slot_pose_ = free_slot->pose;
      slot_z_ = free_slot->z;
    } else {
      if (completed_ >= static_cast<int>(spec_.ground_slots.size())) {
        log_intervention(InterventionKind::Navigation,
                         InterventionSeverity::Operator, 0.0,
                         "no ground slot left for this cycle");
        fatal_ = true;
        return BtStatus::Failure;
      }
      slot_pose_ = spec_.ground_slots[completed_];
      slot_z_ = spec_.ground_slot_z;
    }
    if (!start_drive(pre_approach_pose(slot_pose_,
                                       params_.pre_approach_distance))) {
      log_intervention(InterventionKind::Navigation,
                       InterventionSeverity::Operator, 0.0,
                       "slot approach pose unreachable");
      fatal_ = true;
      return BtStatus::Failure;
    }
    return BtStatus::Running;
  }
  const BtStatus s = drive_status();
  if (s != BtStatus::Running) activity_ = Activity::None;
  if (s == BtStatus::Failure) {
    log_intervention(InterventionKind::Navigation,
                     InterventionSeverity::Operator, 0.0,
                     "slot approach pose unreachable");
    fatal_ = true;
  }
  return s;
}

BtStatus Mission::tick_unload() {
  set_phase("UnloadPallet");
  if (!place_) {
    manipulation::PlaceParams pp = params_.place;
    pp.nominal_pressure = nominal_pressure_;
    place_.emplace(pp);
    activity_ = Activity::Place;
    return BtStatus::Running;
  }
  switch (place_->status()) {
    case manipulation::Status::Running:
      return BtStatus::Running;
    case manipulation::Status::Success:
      completed_ += 1;
      place_.reset();
      activity_ = Activity::None;
      return BtStatus::Success;
    case manipulation::Status::Aborted:
    case manipulation::Status::Failed:
      log_intervention(InterventionKind::Manipulation,
                       InterventionSeverity::Operator, 0.0,
                       "place failed: " + place_->outcome().reason);
      place_.reset();
      fatal_ = true;
      activity_ = Activity::None;
      return BtStatus::Failure;
  }
  return BtStatus::Running;
}

BtStatus Mission::tick_return_home() {
  set_phase("ReturnHome");
  if (activity_ != Activity::Drive) {
    const double d =
        (bb_->state.front.position() - spec_.home.position()).norm();
    if (d <= 2.0 * params_.goal_pos_tol) return BtStatus::Success;
    if (!start_drive(spec_.home, 2.0 * params_.goal_pos_tol)) {
      log_intervention(InterventionKind::Navigation,
                       InterventionSeverity::Operator, 0.0,
                       "no path home");
      fatal_ = true;
      return BtStatus::Failure;
    }
    return BtStatus::Running;
  }
  const BtStatus s = drive_status();
  if (s != BtStatus::Running) activity_ = Activity::None;
  if (s == BtStatus::Failure) {
    log_intervention(InterventionKind::Navigation,
                     InterventionSeverity::Operator, 0.0, "no path home");
    fatal_ = true;
  }
  return s;
}

BtStatus Mission::tick(const Blackboard& bb) {
  bb_ = &bb;
  if (fatal_) {
    status_ = BtStatus::Failure;
    return status_;
  }
  status_ = tree_->tick();
  return status_;
}

control::InnerLoopSetpoints Mission::control_step(const Blackboard& bb,
                                                  double dt) {
  bb_ = &bb;
  control::InnerLoopSetpoints sp;
  sp.fork.lift = bb.state.lift;
  sp.fork.shift = bb.state.shift;
  sp.fork.tilt = 0.0;

  // Collision hold preempts everything until the confirmation arrives.
  if (holding_) {
    if (bb.operator_clear) {
      log_intervention(InterventionKind::CollisionDetection,
                       InterventionSeverity::Worker, bb.time - hold_start_,
                       "collision hold cleared");
      holding_ = false;
    } else {
      return sp;
    }
  } else if (bb.collision_warning) {
    holding_ = true;
    hold_start_ = bb.time;
    return sp;
  }

  switch (activity_) {
    case Activity::Drive: {
      if (drive_done_ || drive_failed_ || path_.segments.empty()) return sp;
      // Remaining arc length and end distance of the tracked axle on a
      // segment's reference polyline. Segments can be long curved arcs, so
      // progress comes from the closest-point projection, not from an
      // end-plane test.
      struct SegProgress {
        double remaining;
        double end_dist;
      };
      const auto seg_progress = [&](size_t i) {
        const auto& s = path_.segments[i];
        const Pose2D axle =
            s.reverse ? vehicle::rear_pose(bb.state.front, bb.state.gamma,
                                           params_.vp)
                      : bb.state.front;
        planning::PathPose pp = path_.poses[s.first];
        pp.reverse = s.reverse;
        Vec2 prev = control::tracked_reference(pp, params_.vp).position();
        double s_total = 0.0, s_best = 0.0;
        double best_d2 = (axle.position() - prev).squared_norm();
        for (int j = s.first + 1; j <= s.last; ++j) {
          pp = path_.poses[j];
          pp.reverse = s.reverse;
          const Vec2 cur = control::tracked_reference(pp, params_.vp)
                               .position();
          const Vec2 ab = cur - prev;
          const double len2 = ab.dot(ab);
          double t = 0.0;
          if (len2 > 1e-18)
            t = std::clamp((axle.position() - prev).dot(ab) / len2, 0.0, 1.0);
          const Vec2 proj = prev + ab * t;
          const double d2 = (axle.position() - proj).squared_norm();
          const double len = std::sqrt(len2);
          if (d2 < best_d2) {
            best_d2 = d2;
            s_best = s_total + t * len;
          }
          s_total += len;
          prev = cur;
        }
        const double end_dist = (axle.position() - prev).norm();
        return SegProgress{s_total - s_best, end_dist};
      };
      // Skip segments already driven out (analytic goal connections can emit
      // direction-switch stubs a few centimeters long), but come to a near
      // stop before flipping the driving direction.
      while (segment_ + 1 < path_.segments.size()) {
        const SegProgress p = seg_progress(segment_);
        if (p.remaining > 0.3 && p.end_dist > 0.3) break;
        if (path_.segments[segment_ + 1].reverse !=
                path_.segments[segment_].reverse &&
            std::abs(bb.state.v) > 0.3)
          return sp;
        segment_ += 1;
      }
      const auto& seg = path_.segments[segment_];
      // Starting a segment from standstill with the articulation far from
      // the arc's steady value makes the heading term saturate and the
      // vehicle circle off the path. Steer to the steady angle in place
      // first; moving transitions (no direction flip) skip this.
      if (steered_segment_ != segment_) {
        if (std::abs(bb.state.v) < 0.15) {
          // A pose carries the curvature of the motion that reached it, so
          // the segment's own curvature sits on the pose after its first.
          const size_t ci = std::min(seg.first + 1, seg.last);
          const double gamma_target = control::steady_articulation(
              path_.poses[ci].curvature, params_.vp);
          if (std::abs(bb.state.gamma - gamma_target) > 0.1) {
            sp.gamma_rate_d =
                std::clamp(3.0 * (gamma_target - bb.state.gamma),
                           -params_.vp.gamma_rate_max,
                           params_.vp.gamma_rate_max);
            return sp;
          }
        }
        steered_segment_ = segment_;
      }
      control::BaseCommand cmd = control::track_path_segment(
          path_, seg, bb.state, params_.gains, params_.vp);
      const SegProgress p = seg_progress(segment_);
      double cap = std::min(std::abs(cmd.v_d), 0.8 * p.remaining + 0.08);
      // Creep through tight arcs; overshoot there costs a replan.
      double kappa_here = 0.0;
      {
        double best = 1e18;
        for (int j = seg.first; j <= seg.last; ++j) {
          const double d2 = (path_.poses[j].pose.position() -
                             bb.state.front.position()).squared_norm();
          if (d2 < best) {
            best = d2;
            kappa_here = path_.poses[j].curvature;
          }
        }
      }
      if (std::abs(kappa_here) > 1e-6)
        cap = std::min(cap, std::max(0.2, 0.15 / std::abs(kappa_here)));
      // Near the goal the path can curl, putting the vehicle close to the
      // end point while plenty of arc length remains; brake on the straight
      // line distance too so the final arrival is always gentle.
      if (segment_ + 1 == path_.segments.size())
        cap = std::min(cap, 0.6 * p.end_dist + 0.08);
      cmd.v_d = std::copysign(cap, cmd.v_d);
      if (segment_ + 1 == path_.segments.size()) {
        if (p.end_dist < drive_tol_) {
          // Straighten the articulation before handing over; whatever comes
          // next (pick, place, parking) wants a neutral joint, and steering
          // out the residual at standstill also rotates the front body
          // toward the reference heading.
          cmd.v_d = 0.0;
          if (std::abs(bb.state.v) < 0.1 && std::abs(bb.state.gamma) > 0.05) {
            cmd.gamma_rate_d = std::clamp(-2.0 * bb.state.gamma,
                                          -params_.vp.gamma_rate_max,
                                          params_.vp.gamma_rate_max);
          } else {
            cmd.gamma_rate_d = 0.0;
            if (std::abs(bb.state.v) < 0.1) drive_done_ = true;
          }
        } else if (p.remaining < 0.05) {
          // Ran out of path off target. Come to a stop first, then plan a
          // fresh path from where we actually are; replanning while still
          // rolling just blows through the new path too.
          if (std::abs(bb.state.v) > 0.1) return sp;
          if (++replans_ > 6) {
            drive_failed_ = true;
          } else {
            const planning::PlanResult r =
                planning::plan(bb.state.front, drive_goal_, bb.costmap,
                               params_.vp, params_.planner);
            if (r.status != planning::PlanStatus::Ok) {
              drive_failed_ = true;
            } else {
              path_ = r.path;
              segment_ = 0;
              steered_segment_ = static_cast<size_t>(-1);
            }
          }
          return sp;
        }
      }
      if (std::getenv("FORKSIM_DRIVE_DEBUG")) {
        static int n = 0;
        if (++n % 50 == 0)
          std::printf(
              "drv t=%.1f seg=%zu/%zu rem=%.2f end=%.2f v=%.2f v_d=%.2f "
              "replans=%d pose=(%.2f,%.2f,%.2f)\n",
              bb.time, segment_, path_.segments.size(), p.remaining,
              p.end_dist, bb.state.v, cmd.v_d, replans_, bb.state.front.x,
              bb.state.front.y, bb.state.front.theta);
      }
      sp.v_d = cmd.v_d;
      sp.gamma_rate_d = cmd.gamma_rate_d;
      return sp;
    }
    case Activity::Pick: {
      if (!pick_) return sp;
      manipulation::ProcedureInput in;
      in.state = bb.state;
      in.vehicle_z = bb.vehicle_z;
      in.target = selected_.pose;
      in.target_z = selected_.z;
      for (const auto& cand : bb.confirmed_pallets)
        if (cand.id == selected_.id) {
          in.target = cand.pose;
          in.target_z = cand.z;
        }
      in.p_l = bb.p_l;
      in.insertion_signal = bb.insertion_signal;
      return pick_->tick(in, dt).setpoints;
    }
    case Activity::Place: {
      if (!place_) return sp;
      manipulation::ProcedureInput in;
      in.state = bb.state;
      in.vehicle_z = bb.vehicle_z;
      in.target = slot_pose_;
      in.target_z = slot_z_;
      in.p_l = bb.p_l;
      return place_->tick(in, dt).setpoints;
    }
    case Activity::Recover: {
      // Back out forward along the pallet's insertion axis until the
      // pre-approach distance, then let the next attempt re-detect.
      const double along =
          selected_.pose.inverse_transform(bb.state.front.position()).x;
      if (along >= params_.pre_approach_distance) {
        recover_done_ = true;
        return sp;
      }
      control::TrackingError err;
      err.e_y = selected_.pose.inverse_transform(
          bb.state.front.position()).y;
      err.e_theta =
          normalize_angle(bb.state.front.theta - selected_.pose.theta);
      sp.v_d = params_.recovery_speed;
      sp.gamma_rate_d = control::steering_rate_law(
          err, bb.state.gamma, std::abs(bb.state.v), params_.gains,
          params_.vp, 0.0);
      return sp;
    }
    case Activity::Dwell:
    case Activity::None:
      return sp;
  }
  return sp;
}

}  // namespace forksim::tasking
