#pragma once

#include <stdexcept>

#include "forksim/geometry.hpp"

namespace forksim::vehicle {

struct VehicleParams {
  double l_f = 0.9;           // front center-to-axle distance [m]
  double l_r = 0.9;           // rear center-to-axle distance [m]
  double fork_length = 1.2;   // d_F [m]
  double fork_mount_offset = 0.3;  // rear axle to fork root [m]
  // Footprint of each chassis part, full extents [m]. Parts span from the
  // articulation joint outward along their body axis.
  double part_length = 1.3;
  double part_width = 1.2;
  double v_max = 1.67;        // 6 km/h
  double gamma_max = 0.7;     // articulation limit [rad]
  double gamma_rate_max = 0.5;  // [rad/s]
  double lift_min = 0.0;
  double lift_max = 2.85;
  double shift_max = 0.15;    // symmetric side-shift range [m]
  double beta_max = 0.15;     // mast tilt range [rad]
  double pallet_height = 0.144;

  double wheelbase() const { return l_f + l_r; }
};

struct VehicleState {
  Pose2D front;       // front axle pose
  double gamma = 0.0; // articulation angle [rad]
  double beta = 0.0;  // mast tilt [rad]
  double lift = 0.0;  // lift height [m]
  double shift = 0.0; // side shift [m]
  double v = 0.0;     // front axle velocity [m/s]
};

enum class ActuatorKind { LinearDrive, LinearRate, FirstOrderLag };

// Actuator response: linear static maps for the drive and the steering
// valve, exact exponential discretization for the lagged cylinders.
struct ActuatorModel {
  ActuatorKind kind = ActuatorKind::LinearDrive;
  double k0 = 0.0;
  double k1 = 1.0;
  double tau = 0.5;    // lag time constant [s], lag kind only
  double y_hat = 0.0;  // lag state

  double step(double u, double dt);
  double steady_state(double u) const { return k1 * u + k0; }
  // Static model inverse, used as feedforward by the inner control loops.
  double inverse(double y) const { return (y - k0) / k1; }
};

// Integrates the articulated kinematics with RK4 over dt. Inputs v and
// gamma_rate are held constant over the step; gamma is clamped at its limit
// and theta stays normalized.
VehicleState kinematics_step(const VehicleState& state, double v,
                             double gamma_rate, double dt,
                             const VehicleParams& params);

// Rear axle pose for a given front pose and articulation angle.
// theta_R = pi + theta_F - gamma.
Pose2D rear_pose(const Pose2D& front, double gamma,
                 const VehicleParams& params);

struct ForkTipPose {
  Pose2D pose;
  double z = 0.0;
};

// Fork tip frame: rear axle advanced by mount offset + fork length along the
// rear heading, shifted laterally by the side-shift; z equals the lift height.
ForkTipPose fork_tip_pose(const VehicleState& state,
                          const VehicleParams& params);

}  // namespace forksim::vehicle
