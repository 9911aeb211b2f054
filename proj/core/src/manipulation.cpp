#include "forksim/manipulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace forksim::manipulation {

ForkContactState contact_state_for_load(double nominal_loaded_pressure) {
  ForkContactState st;
  st.p_pc = 0.8 * nominal_loaded_pressure;
  st.p_c = 0.55 * nominal_loaded_pressure;
  return st;
}

bool fork_contact_step(ForkContactState& state, double p_l) {
  if (p_l <= state.p_pc) {
    state.crit_cnt += 1;
    state.f_pc = true;
  } else {
    state.crit_cnt = 0;
    state.f_pc = false;
  }
  if (state.crit_cnt > state.crit_tout || p_l < state.p_c) {
    state.f_c = true;
    state.f_pc = true;
  } else {
    state.f_c = false;
  }
  return state.f_c;
}

StandstillLiftWait::StandstillLiftWait(double target_,
                                       const vehicle::VehicleParams& vp,
                                       double tolerance_, double timeout_)
    : target(target_), tolerance(tolerance_), timeout(timeout_) {
  if (target_ < vp.lift_min || target_ > vp.lift_max) status = Status::Failed;
}

Status StandstillLiftWait::tick(double lift_feedback, double dt) {
  if (status != Status::Running) return status;
  if (std::abs(lift_feedback - target) <= tolerance) {
    status = Status::Success;
    return status;
  }
  elapsed += dt;
  if (elapsed > timeout) status = Status::Failed;
  return status;
}

namespace {

std::string event_line(double t, const char* phase, const char* what,
                       double p_l) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "{\"t\":%.3f,\"phase\":\"%s\",\"event\":\"%s\",\"p_l\":%.2f}",
                t, phase, what, p_l);
  return buf;
}

// Steering rate for reversing the rear axle along the target's insertion
// axis (the mirrored form of the forward tracking law).
double reverse_axis_steering(const ProcedureInput& in, const Pose2D& target,
                             const control::PtcGains& gains,
                             const vehicle::VehicleParams& vp) {
  const Pose2D rear = vehicle::rear_pose(in.state.front, in.state.gamma, vp);
  const Pose2D line{target.x, target.y, target.theta + kPi};
  control::TrackingError err;
  err.e_x = 0.0;
  err.e_y = line.inverse_transform(rear.position()).y;
  err.e_theta = normalize_angle(rear.theta - line.theta);
  const double mirrored = control::steering_rate_law(
      err, -in.state.gamma, std::abs(in.state.v), gains, vp, 0.0);
  return -mirrored;
}

double approach_speed(double distance, double cap, double creep) {
  return std::min(cap, 0.8 * distance + creep);
}

}  // namespace

PickProcedure::PickProcedure(PickParams params) : params_(params) {
  events_.push_back(event_line(0.0, "approach", "enter", 0.0));
}

void PickProcedure::enter(Phase next, const char* name, double p_l) {
  phase_ = next;
  phase_elapsed_ = 0.0;
  events_.push_back(event_line(time_, name, "enter", p_l));
}

void PickProcedure::fail(const char* reason, double p_l) {
  status_ = Status::Failed;
  reason_ = reason;
  phase_ = Phase::Terminal;
  events_.push_back(event_line(time_, "terminal", reason, p_l));
}

ProcedureCommand PickProcedure::tick(const ProcedureInput& in, double dt) {
  ProcedureCommand cmd;
  if (phase_ == Phase::Terminal) {
    cmd.active = false;
    cmd.setpoints.fork.lift = in.state.lift;
    cmd.setpoints.fork.shift = in.state.shift;
    return cmd;
  }
  time_ += dt;
  phase_elapsed_ += dt;
  if (phase_elapsed_ > params_.phase_timeout) {
    fail("phase timeout", in.p_l);
    cmd.active = false;
    return cmd;
  }

  const auto tip = vehicle::fork_tip_pose(in.state, params_.vp);
  const Vec2 rel = tip.pose.inverse_transform(in.target.position());
  const double x_p = rel.x;
  const double y_p = rel.y;
  const double e_theta =
      normalize_angle(in.target.theta + kPi - tip.pose.theta);

  cmd.setpoints.fork.shift = in.state.shift;
  cmd.setpoints.fork.tilt = 0.0;

  switch (phase_) {
    case Phase::Approach: {
      if (x_p > 0.0)
        timings_.approach += dt;
      else
        timings_.insert += dt;
      if (control::abort_check(x_p, y_p, e_theta, params_.abort) ==
          control::ApproachGate::Abort) {
        status_ = Status::Aborted;
        reason_ = "alignment out of tolerance at the gate";
        phase_ = Phase::Terminal;
        events_.push_back(event_line(time_, "terminal", "abort", in.p_l));
        cmd.active = false;
        cmd.setpoints.fork.lift = in.state.lift;
        return cmd;
      }
      const double to_stop = x_p + params_.vp.fork_length;
      if (to_stop <= 0.005 || in.insertion_signal) {
        lift_sp_ = in.target_z - in.vehicle_z + params_.attach_raise;
        enter(Phase::Attach, "attach", in.p_l);
        cmd.setpoints.fork.lift = lift_sp_;
        return cmd;
      }
      cmd.setpoints.v_d =
          -approach_speed(to_stop, params_.approach_speed,
                          params_.creep_speed);
      cmd.setpoints.gamma_rate_d =
          reverse_axis_steering(in, in.target, params_.gains, params_.vp);
      cmd.setpoints.fork.lift =
          in.target_z - in.vehicle_z + params_.pocket_entry;
      // Side shift absorbs residual lateral error until the pocket mouth.
      if (x_p > 0.1)
        cmd.setpoints.fork.shift =
            std::clamp(in.state.shift + y_p, -params_.vp.shift_max,
                       params_.vp.shift_max);
      return cmd;
    }
    case Phase::Attach: {
      timings_.lift += dt;
      cmd.setpoints.fork.lift = lift_sp_;
      if (std::abs(in.state.lift - lift_sp_) <= params_.lift_tolerance) {
        lift_sp_ = std::min(in.target_z - in.vehicle_z +
                                params_.travel_clearance,
                            params_.vp.lift_max);
        enter(Phase::Lift, "lift", in.p_l);
      }
      return cmd;
    }
    case Phase::Lift: {
      timings_.lift += dt;
      cmd.setpoints.fork.lift = lift_sp_;
      if (std::abs(in.state.lift - lift_sp_) <= params_.lift_tolerance) {
        status_ = Status::Success;
        phase_ = Phase::Terminal;
        events_.push_back(event_line(time_, "terminal", "success", in.p_l));
        cmd.active = false;
      }
      return cmd;
    }
    case Phase::Terminal:
      break;
  }
  cmd.active = false;
  return cmd;
}

ManipulationOutcome PickProcedure::outcome() const {
  ManipulationOutcome out;
  out.status = status_;
  out.timings = timings_;
  out.reason = reason_;
  return out;
}

PlaceProcedure::PlaceProcedure(PlaceParams params)
    : params_(params),
      contact_(contact_state_for_load(params.nominal_pressure)) {
  events_.push_back(event_line(0.0, "enter_slot", "enter", 0.0));
}

void PlaceProcedure::enter(Phase next, const char* name, double p_l) {
  phase_ = next;
  phase_elapsed_ = 0.0;
  events_.push_back(event_line(time_, name, "enter", p_l));
}

void PlaceProcedure::fail(Status status, const char* reason, double p_l) {
  status_ = status;
  reason_ = reason;
  phase_ = Phase::Terminal;
  events_.push_back(event_line(time_, "terminal", reason, p_l));
}

ProcedureCommand PlaceProcedure::tick(const ProcedureInput& in, double dt) {
  ProcedureCommand cmd;
  if (phase_ == Phase::Terminal) {
    cmd.active = false;
    cmd.setpoints.fork.lift = in.state.lift;
    cmd.setpoints.fork.shift = in.state.shift;
    return cmd;
  }
  time_ += dt;
  phase_elapsed_ += dt;
  if (phase_elapsed_ > params_.phase_timeout) {
    fail(Status::Failed, "phase timeout", in.p_l);
    cmd.active = false;
    return cmd;
  }

  const bool f_c = fork_contact_step(contact_, in.p_l);
  const auto tip = vehicle::fork_tip_pose(in.state, params_.vp);
  // Where the carried pallet's front face sits right now.
  const Pose2D pallet_hat = tip.pose.compose(
      Pose2D{-params_.vp.fork_length, 0.0, kPi});
  const double along =
      in.target.inverse_transform(pallet_hat.position()).x;

  cmd.setpoints.fork.shift = in.state.shift;
  cmd.setpoints.fork.tilt = 0.0;

  switch (phase_) {
    case Phase::Enter: {
      if (f_c) {
        // The forks or the load met something during entry: never push on.
        fail(Status::Aborted, "premature contact during slot entry", in.p_l);
        cmd.active = false;
        cmd.setpoints.fork.lift = in.state.lift;
        return cmd;
      }
      lift_sp_ = in.target_z - in.vehicle_z + params_.safe_height +
                 params_.carry_drop;
      lift_sp_ = std::min(lift_sp_, params_.vp.lift_max);
      cmd.setpoints.fork.lift = lift_sp_;
      // Reach the entry height before driving over the slot.
      if (std::abs(in.state.lift - lift_sp_) > 2 * params_.lift_tolerance &&
          along > 1.5) {
        timings_.lift += dt;
        return cmd;
      }
      timings_.approach += dt;
      if (along <= 0.005) {
        lift_sp_ = in.state.lift;
        enter(Phase::Lower, "lower", in.p_l);
        return cmd;
      }
      cmd.setpoints.v_d = -approach_speed(along, params_.approach_speed,
                                          params_.creep_speed);
      cmd.setpoints.gamma_rate_d =
          reverse_axis_steering(in, in.target, params_.gains, params_.vp);
      return cmd;
    }
    case Phase::Lower: {
      timings_.lower += dt;
      if (f_c) {
        lift_sp_ = in.state.lift + params_.half_pallet_raise;
        enter(Phase::Raise, "raise", in.p_l);
        cmd.setpoints.fork.lift = lift_sp_;
        return cmd;
      }
      lift_sp_ -= params_.lowering_rate * dt;
      const double floor = in.target_z - in.vehicle_z + params_.carry_drop -
                           params_.contact_search;
      if (lift_sp_ < floor) {
        fail(Status::Failed, "no contact within the search range", in.p_l);
        cmd.active = false;
        cmd.setpoints.fork.lift = in.state.lift;
        return cmd;
      }
      cmd.setpoints.fork.lift = lift_sp_;
      return cmd;
    }
    case Phase::Raise: {
      timings_.lift += dt;
      cmd.setpoints.fork.lift = lift_sp_;
      if (std::abs(in.state.lift - lift_sp_) <= params_.lift_tolerance)
        enter(Phase::Retract, "retract", in.p_l);
      return cmd;
    }
    case Phase::Retract: {
      timings_.retract += dt;
      cmd.setpoints.fork.lift = lift_sp_;
      const double tip_along = in.target.inverse_transform(
          tip.pose.position()).x;
      if (tip_along >= params_.retract_clearance) {
        status_ = Status::Success;
        phase_ = Phase::Terminal;
        events_.push_back(event_line(time_, "terminal", "success", in.p_l));
        cmd.active = false;
        return cmd;
      }
      cmd.setpoints.v_d = approach_speed(
          params_.retract_clearance - tip_along + 0.2,
          params_.approach_speed, params_.creep_speed);
      // Straighten out while backing away from the slot.
      cmd.setpoints.gamma_rate_d =
          std::clamp(-2.0 * in.state.gamma, -params_.vp.gamma_rate_max,
                     params_.vp.gamma_rate_max);
      return cmd;
    }
    case Phase::Terminal:
      break;
  }
  cmd.active = false;
  return cmd;
}

ManipulationOutcome PlaceProcedure::outcome() const {
  ManipulationOutcome out;
  out.status = status_;
  out.timings = timings_;
  out.reason = reason_;
  return out;
}

}  // namespace forksim::manipulation
