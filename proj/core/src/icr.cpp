#include "forksim/icr.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace forksim::planning {

namespace {
double sign(double x) { return x < 0.0 ? -1.0 : 1.0; }
}  // namespace

double effective_articulation(double alpha, double beta) {
  const double c = std::clamp(std::cos(alpha) * std::cos(beta), -1.0, 1.0);
  return sign(alpha) * std::acos(c);
}

double icr_radius_front(double alpha, double beta,
                        const vehicle::VehicleParams& params) {
  const double a = std::abs(effective_articulation(alpha, beta));
  if (a < 1e-12) return std::numeric_limits<double>::infinity();
  return params.l_f / std::tan(a / 2.0);
}

double icr_radius_joint(double alpha, double beta,
                        const vehicle::VehicleParams& params) {
  const double a = std::abs(effective_articulation(alpha, beta));
  if (a < 1e-12) return std::numeric_limits<double>::infinity();
  return params.l_r / std::sin(a / 2.0);
}

double gamma_from_icr(double alpha, double beta,
                      const vehicle::VehicleParams& params) {
  if (std::abs(params.l_f - params.l_r) > 1e-9)
    throw std::invalid_argument("gamma_from_icr: requires symmetric l_f == l_r");
  const double a_eff = effective_articulation(alpha, beta);
  // Matching front-axle ICR radius of the articulated vehicle,
  // r = l_f / tan(|a_eff| / 2), with a bicycle of wheelbase l_f + l_r:
  // sin(gamma_cl) = (l_f + l_r) / r = 2 tan(|a_eff| / 2).
  const double s = 2.0 * std::tan(std::abs(a_eff) / 2.0);
  if (s >= 1.0) return sign(alpha) * kPi / 2.0;
  return sign(alpha) * std::asin(s);
}

std::optional<double> icr_convert(double gamma_cl, double beta,
                                  const vehicle::VehicleParams& params) {
  if (std::abs(gamma_cl) < 1e-15) return 0.0;
  const double target = std::abs(gamma_cl);
  double lo = 0.0, hi = params.gamma_max;
  const double f_hi = gamma_from_icr(hi, beta, params) - target;
  if (f_hi < -1e-9) return std::nullopt;  // curvature beyond articulation limit
  if (f_hi <= 0.0) return sign(gamma_cl) * hi;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double f = gamma_from_icr(mid, beta, params) - target;
    if (f < 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-15) break;
  }
  return sign(gamma_cl) * 0.5 * (lo + hi);
}

double curvature_from_gamma_cl(double gamma_cl,
                               const vehicle::VehicleParams& params) {
  return std::sin(gamma_cl) / params.wheelbase();
}

double gamma_cl_from_curvature(double curvature,
                               const vehicle::VehicleParams& params) {
  return std::asin(std::clamp(curvature * params.wheelbase(), -1.0, 1.0));
}

double max_curvature(const vehicle::VehicleParams& params) {
  return curvature_from_gamma_cl(gamma_from_icr(params.gamma_max, 0.0, params),
                                 params);
}

}  // namespace forksim::planning
