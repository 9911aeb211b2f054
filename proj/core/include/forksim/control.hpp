#pragma once

#include "forksim/geometry.hpp"
#include "forksim/planner.hpp"
#include "forksim/vehicle_model.hpp"

namespace forksim::control {

struct PtcGains {
  double k_ey = 0.5;       // lateral error gain [1/m^2]
  double k_etheta = 1.2;   // heading error gain [1/m]
  double v_ref = 1.0;      // reference travel speed [m/s]
  double k_v = 0.8;        // speed reduction per squared steering rate [s^2]
  double v_min = 0.15;     // floor speed during sharp steering [m/s]
  double lookahead = 1.5;  // virtual vehicle advance [m]
};

struct TrackingError {
  double e_x = 0.0;
  double e_y = 0.0;
  double e_theta = 0.0;
};

// Cartesian tracking error rotated into the reference frame.
TrackingError error_system(const Pose2D& q_ref, const Pose2D& q_act);

// Removes the geometric offset a look-ahead reference induces on curved
// paths: a vehicle tracking perfectly sits (1 - cos(k s)) / k beside and k s
// behind the reference heading. No effect on straight segments.
TrackingError compensate_lookahead(TrackingError err, double curvature,
                                   double s_ahead);

// Lyapunov steering-rate law for the articulated base, saturated at the
// vehicle's steering rate limit. v is the tracked axle speed, non-negative.
// gamma_ref is the steady articulation for the local path curvature; the
// damping term acts on the deviation from it so constant-curvature paths are
// tracked without a standing lateral offset.
double steering_rate_law(const TrackingError& err, double gamma, double v,
                         const PtcGains& gains,
                         const vehicle::VehicleParams& vp,
                         double gamma_ref = 0.0);

// Steady articulation angle that holds a front-axle arc of the given
// curvature.
double steady_articulation(double curvature, const vehicle::VehicleParams& vp);

// Speed setpoint: slow down with the squared steering rate, never below
// v_min, never above v_ref.
double velocity_law(double gamma_rate_d, const PtcGains& gains);

// Reference pose of the tracked axle for one path pose: the path pose itself
// for forward travel, the rear axle pose (at the steady articulation matching
// the path curvature) for reverse travel.
Pose2D tracked_reference(const planning::PathPose& pp,
                         const vehicle::VehicleParams& vp);

// Virtual reference vehicle: closest point on the segment, advanced by the
// look-ahead arc length, clamped to the segment end. Throws on an empty
// segment. The poses are the tracked-axle references for this segment.
Pose2D virtual_vehicle(const std::vector<Pose2D>& segment_poses,
                       const Pose2D& q_act, double lookahead);

struct BaseCommand {
  double v_d = 0.0;           // signed speed setpoint
  double gamma_rate_d = 0.0;  // steering rate setpoint
  TrackingError err;
  Pose2D q_d;
  bool reverse = false;
};

// Full base tracking step for one path segment: picks the tracked axle,
// projects the virtual vehicle, and mirrors the control law for reverse
// segments (the rear axle of the symmetric vehicle behaves like a front axle
// with negated articulation).
BaseCommand track_path_segment(const planning::Path& path,
                               const planning::PathSegment& segment,
                               const vehicle::VehicleState& state,
                               const PtcGains& gains,
                               const vehicle::VehicleParams& vp);

struct ForkSetpoints {
  double lift = 0.0;   // l_d [m]
  double shift = 0.0;  // s_d [m]
  double tilt = 0.0;   // beta_d [rad]
};

struct FttResult {
  double x_p = 0.0;  // target in the fork tip frame, longitudinal
  double y_p = 0.0;  // lateral
  double e_theta = 0.0;
  ForkSetpoints setpoints;
};

// Fork tip transformation: the manipulation target rotated into the fork tip
// frame. The shift setpoint absorbs the lateral error, the lift setpoint the
// target height, and the tilt setpoint keeps the forks level.
FttResult fork_tip_transform(const Pose2D& q_p, double z_p, const Pose2D& q_t,
                             double z_t);

struct AbortThresholds {
  double eps_x = 0.2;        // gate window ahead of the pallet front [m]
  double y_abort = 0.05;     // lateral error bound [m]
  double theta_abort = 0.05; // heading error bound [rad]
};

enum class ApproachGate { Proceed, Abort };

// Abort the approach when the fork tips are inside the gate window just
// before the pallet front and the alignment is out of tolerance.
ApproachGate abort_check(double x_p, double y_p, double e_theta,
                         const AbortThresholds& thresholds = {});

// Insertion tolerance: the yaw-corrected lateral error and the height error
// must both stay inside the fork pocket limits.
bool insertion_within_tolerance(double e_y, double e_psi, double e_z,
                                double y_tol = 0.05, double z_tol = 0.04);

struct ChannelConfig {
  vehicle::ActuatorModel model;  // command to rate (or speed) response
  double kp = 1.0;
  double ki = 0.2;
  double u_min = -1.0;
  double u_max = 1.0;
  bool position = false;  // setpoint is a position; a P loop produces the rate
  double pos_kp = 4.0;
  double rate_kp = 3.0;   // inner rate damping, in units of model gain
  double rate_max = 0.5;
};

struct ChannelState {
  double integ = 0.0;
  double prev_feedback = 0.0;
  bool has_prev = false;
};

// One inner-loop channel step: model-inverse feedforward plus PI with
// clamping anti-windup.
double channel_step(const ChannelConfig& cfg, ChannelState& state,
                    double setpoint, double feedback, double dt);

struct InnerLoopSetpoints {
  double v_d = 0.0;
  double gamma_rate_d = 0.0;
  ForkSetpoints fork;
};

struct JointFeedback {
  double v = 0.0;
  double gamma_rate = 0.0;
  double lift = 0.0;
  double shift = 0.0;
  double tilt = 0.0;
};

struct Commands {
  double u_v = 0.0;
  double u_gamma = 0.0;
  double u_lift = 0.0;
  double u_shift = 0.0;
  double u_tilt = 0.0;
};

struct InnerLoop {
  ChannelConfig drive;
  ChannelConfig steer;
  ChannelConfig lift;
  ChannelConfig shift;
  ChannelConfig tilt;

  InnerLoop();

  Commands step(const InnerLoopSetpoints& sp, const JointFeedback& fb,
                double dt);

 private:
  ChannelState s_drive_, s_steer_, s_lift_, s_shift_, s_tilt_;
};

}  // namespace forksim::control
