#include "forksim/control.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace forksim::control {

TrackingError error_system(const Pose2D& q_ref, const Pose2D& q_act) {
  const double c = std::cos(q_ref.theta), s = std::sin(q_ref.theta);
  const double dx = q_act.x - q_ref.x, dy = q_act.y - q_ref.y;
  TrackingError e;
  e.e_x = c * dx + s * dy;
  e.e_y = -s * dx + c * dy;
  e.e_theta = normalize_angle(q_act.theta - q_ref.theta);
  return e;
}

TrackingError compensate_lookahead(TrackingError err, double curvature,
                                   double s_ahead) {
  if (std::abs(curvature) < 1e-12) return err;
  err.e_y -= (1.0 - std::cos(curvature * s_ahead)) / curvature;
  err.e_theta = normalize_angle(err.e_theta + curvature * s_ahead);
  return err;
}

double steering_rate_law(const TrackingError& err, double gamma, double v,
                         const PtcGains& gains,
                         const vehicle::VehicleParams& vp, double gamma_ref) {
  const double wheelbase = vp.wheelbase();
  const double rate = -gains.k_ey * v * wheelbase / vp.l_r * err.e_y -
                      gains.k_etheta * wheelbase / vp.l_r * err.e_theta -
                      v / vp.l_r * (gamma - gamma_ref);
  return std::clamp(rate, -vp.gamma_rate_max, vp.gamma_rate_max);
}

double steady_articulation(double curvature,
                           const vehicle::VehicleParams& vp) {
  return 2.0 * std::atan(curvature * vp.l_f);
}

double velocity_law(double gamma_rate_d, const PtcGains& gains) {
  return std::max(gains.v_ref - gains.k_v * gamma_rate_d * gamma_rate_d,
                  gains.v_min);
}

Pose2D tracked_reference(const planning::PathPose& pp,
                         const vehicle::VehicleParams& vp) {
  if (!pp.reverse) return pp.pose;
  // The front axle arc curvature of the articulated vehicle at steady
  // articulation gamma is tan(gamma/2) / l_f.
  return vehicle::rear_pose(pp.pose, steady_articulation(pp.curvature, vp),
                            vp);
}

Pose2D virtual_vehicle(const std::vector<Pose2D>& segment_poses,
                       const Pose2D& q_act, double lookahead) {
  if (segment_poses.empty())
    throw std::invalid_argument("virtual_vehicle: empty segment");
  if (segment_poses.size() == 1) return segment_poses.front();

  // Arc length of the closest point over all polyline pieces.
  double best_d2 = std::numeric_limits<double>::infinity();
  double best_s = 0.0;
  double s_accum = 0.0;
  for (size_t i = 0; i + 1 < segment_poses.size(); ++i) {
    const Vec2 a = segment_poses[i].position();
    const Vec2 b = segment_poses[i + 1].position();
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    const double len = std::sqrt(len2);
    double t = 0.0;
    if (len2 > 1e-18)
      t = std::clamp((q_act.position() - a).dot(ab) / len2, 0.0, 1.0);
    const Vec2 proj = a + ab * t;
    const Vec2 diff = q_act.position() - proj;
    const double d2 = diff.dot(diff);
    if (d2 < best_d2) {
      best_d2 = d2;
      best_s = s_accum + t * len;
    }
    s_accum += len;
  }
  const double total = s_accum;
  const double s_ref = std::min(best_s + lookahead, total);

  // Pose at arc length s_ref, interpolating within the containing piece.
  double s = 0.0;
  for (size_t i = 0; i + 1 < segment_poses.size(); ++i) {
    const Vec2 a = segment_poses[i].position();
    const Vec2 b = segment_poses[i + 1].position();
    const double len = (b - a).norm();
    if (s + len >= s_ref || i + 2 == segment_poses.size()) {
      const double t = len > 1e-12 ? std::clamp((s_ref - s) / len, 0.0, 1.0)
                                   : 1.0;
      Pose2D out;
      out.x = a.x + (b.x - a.x) * t;
      out.y = a.y + (b.y - a.y) * t;
      out.theta = normalize_angle(
          segment_poses[i].theta +
          t * normalize_angle(segment_poses[i + 1].theta -
                              segment_poses[i].theta));
      return out;
    }
    s += len;
  }
  return segment_poses.back();
}

BaseCommand track_path_segment(const planning::Path& path,
                               const planning::PathSegment& segment,
                               const vehicle::VehicleState& state,
                               const PtcGains& gains,
                               const vehicle::VehicleParams& vp) {
  if (segment.first > segment.last || segment.last >= path.poses.size())
    throw std::invalid_argument("track_path_segment: bad segment");
  std::vector<Pose2D> refs;
  refs.reserve(segment.last - segment.first + 1);
  for (size_t i = segment.first; i <= segment.last; ++i) {
    planning::PathPose pp = path.poses[i];
    pp.reverse = segment.reverse;
    refs.push_back(tracked_reference(pp, vp));
  }

  BaseCommand cmd;
  cmd.reverse = segment.reverse;
  const double speed = std::abs(state.v);
  const auto curvature_near = [&](const Pose2D& q_d) {
    double best = std::numeric_limits<double>::infinity();
    double curv = 0.0;
    for (size_t i = segment.first; i <= segment.last; ++i) {
      const Vec2 d = refs[i - segment.first].position() - q_d.position();
      const double d2 = d.dot(d);
      if (d2 < best) {
        best = d2;
        curv = path.poses[i].curvature;
      }
    }
    return curv;
  };
  if (!segment.reverse) {
    cmd.q_d = virtual_vehicle(refs, state.front, gains.lookahead);
    cmd.err = error_system(cmd.q_d, state.front);
    const double kappa = curvature_near(cmd.q_d);
    const TrackingError err =
        compensate_lookahead(cmd.err, kappa, gains.lookahead);
    cmd.gamma_rate_d = steering_rate_law(err, state.gamma, speed, gains, vp,
                                         steady_articulation(kappa, vp));
    cmd.v_d = velocity_law(cmd.gamma_rate_d, gains);
  } else {
    // Mirrored law: the rear axle of the symmetric vehicle driven backwards
    // behaves like a front axle with negated articulation and steering rate.
    // Along the rear reference the traversed curvature flips sign.
    const Pose2D rear = vehicle::rear_pose(state.front, state.gamma, vp);
    cmd.q_d = virtual_vehicle(refs, rear, gains.lookahead);
    cmd.err = error_system(cmd.q_d, rear);
    const double kappa = -curvature_near(cmd.q_d);
    const TrackingError err =
        compensate_lookahead(cmd.err, kappa, gains.lookahead);
    const double mirrored = steering_rate_law(err, -state.gamma, speed, gains,
                                              vp, steady_articulation(kappa, vp));
    cmd.gamma_rate_d = -mirrored;
    cmd.v_d = -velocity_law(mirrored, gains);
  }
  return cmd;
}

FttResult fork_tip_transform(const Pose2D& q_p, double z_p, const Pose2D& q_t,
                             double z_t) {
  FttResult r;
  r.e_theta = normalize_angle(q_p.theta - q_t.theta);
  const double c = std::cos(r.e_theta), s = std::sin(r.e_theta);
  const double dx = q_p.x - q_t.x, dy = q_p.y - q_t.y;
  r.x_p = c * dx - s * dy;
  r.y_p = s * dx + c * dy;
  r.setpoints.shift = r.y_p;
  r.setpoints.lift = z_p;
  r.setpoints.tilt = 0.0;
  (void)z_t;
  return r;
}

ApproachGate abort_check(double x_p, double y_p, double e_theta,
                         const AbortThresholds& thresholds) {
  const bool in_window = x_p > 0.0 && x_p < thresholds.eps_x;
  if (!in_window) return ApproachGate::Proceed;
  if (std::abs(y_p) > thresholds.y_abort ||
      std::abs(e_theta) > thresholds.theta_abort)
    return ApproachGate::Abort;
  return ApproachGate::Proceed;
}

bool insertion_within_tolerance(double e_y, double e_psi, double e_z,
                                double y_tol, double z_tol) {
  const double c = std::cos(e_psi);
  if (std::abs(c) < 1e-6) return false;
  return std::abs(e_y / c) <= y_tol && std::abs(e_z) <= z_tol;
}

double channel_step(const ChannelConfig& cfg, ChannelState& state,
                    double setpoint, double feedback, double dt) {
  const double error = setpoint - feedback;
  double raw;
  if (cfg.position) {
    // Outer P loop turns the position error into a rate setpoint; an inner
    // rate correction (finite-difference rate feedback) damps the actuator
    // lag so the cascade settles without overshoot.
    const double rate_d = std::clamp(cfg.pos_kp * error, -cfg.rate_max,
                                     cfg.rate_max);
    const double rate_fb =
        state.has_prev ? (feedback - state.prev_feedback) / dt : 0.0;
    raw = cfg.model.inverse(rate_d) +
          cfg.rate_kp / cfg.model.k1 * (rate_d - rate_fb) + state.integ;
  } else {
    raw = cfg.model.inverse(setpoint) + cfg.kp * error + state.integ;
  }
  state.prev_feedback = feedback;
  state.has_prev = true;
  const double u = std::clamp(raw, cfg.u_min, cfg.u_max);
  // Clamping anti-windup: only integrate when unsaturated or unwinding.
  if (u == raw || error * (raw - u) < 0.0) state.integ += cfg.ki * error * dt;
  return u;
}

InnerLoop::InnerLoop() {
  lift.position = true;
  shift.position = true;
  tilt.position = true;
  lift.rate_max = 0.25;
  shift.rate_max = 0.10;
  tilt.rate_max = 0.15;
}

Commands InnerLoop::step(const InnerLoopSetpoints& sp, const JointFeedback& fb,
                         double dt) {
  Commands c;
  c.u_v = channel_step(drive, s_drive_, sp.v_d, fb.v, dt);
  c.u_gamma = channel_step(steer, s_steer_, sp.gamma_rate_d, fb.gamma_rate, dt);
  c.u_lift = channel_step(lift, s_lift_, sp.fork.lift, fb.lift, dt);
  c.u_shift = channel_step(shift, s_shift_, sp.fork.shift, fb.shift, dt);
  c.u_tilt = channel_step(tilt, s_tilt_, sp.fork.tilt, fb.tilt, dt);
  return c;
}

}  // namespace forksim::control
