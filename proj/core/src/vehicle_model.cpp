#include "forksim/vehicle_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

namespace forksim {

std::ostream& operator<<(std::ostream& os, const Pose2D& p) {
  return os << "(" << p.x << ", " << p.y << ", " << p.theta << ")";
}

}  // namespace forksim

namespace forksim::vehicle {

double ActuatorModel::step(double u, double dt) {
  switch (kind) {
    case ActuatorKind::LinearDrive:
    case ActuatorKind::LinearRate:
      return k1 * u + k0;
    case ActuatorKind::FirstOrderLag: {
      if (dt <= 0.0) throw std::invalid_argument("actuator_step: dt must be > 0");
      const double a = std::exp(-dt / tau);
      y_hat = y_hat * a + k1 * u * (1.0 - a);
      return y_hat;
    }
  }
  return 0.0;
}

namespace {

struct KinDeriv {
  double dx, dy, dtheta, dgamma;
};

KinDeriv kin_deriv(double theta, double gamma, double v, double gamma_rate,
                   const VehicleParams& p) {
  const double denom = p.l_f * std::cos(gamma) + p.l_r;
  KinDeriv d;
  d.dx = v * std::cos(theta);
  d.dy = v * std::sin(theta);
  d.dtheta = (v * std::sin(gamma) + gamma_rate * p.l_r) / denom;
  d.dgamma = gamma_rate;
  return d;
}

}  // namespace

VehicleState kinematics_step(const VehicleState& state, double v,
                             double gamma_rate, double dt,
                             const VehicleParams& params) {
  if (!(dt > 0.0)) throw std::invalid_argument("kinematics_step: dt must be > 0");
  if (!std::isfinite(v) || !std::isfinite(gamma_rate) ||
      !std::isfinite(state.front.x) || !std::isfinite(state.front.y) ||
      !std::isfinite(state.front.theta) || !std::isfinite(state.gamma)) {
    throw std::invalid_argument("kinematics_step: non-finite input");
  }

  const double x = state.front.x, y = state.front.y;
  const double th = state.front.theta, g = state.gamma;

  const KinDeriv k1 = kin_deriv(th, g, v, gamma_rate, params);
  const KinDeriv k2 = kin_deriv(th + 0.5 * dt * k1.dtheta,
                                g + 0.5 * dt * k1.dgamma, v, gamma_rate, params);
  const KinDeriv k3 = kin_deriv(th + 0.5 * dt * k2.dtheta,
                                g + 0.5 * dt * k2.dgamma, v, gamma_rate, params);
  const KinDeriv k4 =
      kin_deriv(th + dt * k3.dtheta, g + dt * k3.dgamma, v, gamma_rate, params);

  auto rk4 = [dt](double a, double b, double c, double d) {
    return dt / 6.0 * (a + 2.0 * b + 2.0 * c + d);
  };

  VehicleState out = state;
  out.front.x = x + rk4(k1.dx, k2.dx, k3.dx, k4.dx);
  out.front.y = y + rk4(k1.dy, k2.dy, k3.dy, k4.dy);
  out.front.theta =
      normalize_angle(th + rk4(k1.dtheta, k2.dtheta, k3.dtheta, k4.dtheta));
  out.gamma = std::clamp(g + gamma_rate * dt, -params.gamma_max, params.gamma_max);
  out.v = v;
  return out;
}

Pose2D rear_pose(const Pose2D& front, double gamma,
                 const VehicleParams& params) {
  const double theta_r = normalize_angle(kPi + front.theta - gamma);
  const Vec2 joint = front.position() - unit(front.theta) * params.l_f;
  const Vec2 rear = joint + unit(theta_r) * params.l_r;
  return {rear.x, rear.y, theta_r};
}

ForkTipPose fork_tip_pose(const VehicleState& state,
                          const VehicleParams& params) {
  const Pose2D rear = rear_pose(state.front, state.gamma, params);
  const double ahead = params.fork_mount_offset + params.fork_length;
  const Vec2 tip = rear.position() + unit(rear.theta) * ahead +
                   unit(rear.theta + kPi / 2.0) * state.shift;
  return {Pose2D{tip.x, tip.y, rear.theta}, state.lift};
}

}  // namespace forksim::vehicle
