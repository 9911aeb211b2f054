#pragma once

#include <optional>

#include "forksim/vehicle_model.hpp"

namespace forksim::planning {

// Car-like <-> articulated steering conversion by superimposing the
// instantaneous centre of rotation of both vehicle models. Requires the
// symmetric configuration l_f == l_r. The joint tilt beta enters through the
// effective planar articulation angle, cos(a_eff) = cos(alpha) * cos(beta).

// Effective planar articulation angle for a tilted central joint.
double effective_articulation(double alpha, double beta);

// ICR radius measured at the front axle for articulation alpha.
double icr_radius_front(double alpha, double beta,
                        const vehicle::VehicleParams& params);

// ICR radius measured at the articulation joint.
double icr_radius_joint(double alpha, double beta,
                        const vehicle::VehicleParams& params);

// Car-like steering angle producing the same ICR as articulation alpha.
double gamma_from_icr(double alpha, double beta,
                      const vehicle::VehicleParams& params);

// Inverse conversion: articulation angle matching a car-like steering angle,
// solved by bracketed bisection. Empty when the requested curvature exceeds
// the articulation limit.
std::optional<double> icr_convert(double gamma_cl, double beta,
                                  const vehicle::VehicleParams& params);

// Path curvature at the front axle for a car-like steering angle
// (wheelbase l_f + l_r).
double curvature_from_gamma_cl(double gamma_cl,
                               const vehicle::VehicleParams& params);
double gamma_cl_from_curvature(double curvature,
                               const vehicle::VehicleParams& params);

// Maximum car-like-equivalent curvature reachable within the articulation
// limit gamma_max.
double max_curvature(const vehicle::VehicleParams& params);

}  // namespace forksim::planning
