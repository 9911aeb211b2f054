#include "forksim/reeds_shepp.hpp"

#include <cmath>
#include <limits>

// Classic Reeds-Shepp curve enumeration (unit turning radius). The word
// families are generated from the base solutions by timeflip and reflection
// transforms; the shortest valid candidate wins.

namespace forksim::planning {

namespace {

constexpr double kZero = 10.0 * std::numeric_limits<double>::epsilon();
constexpr double kTwoPi = 2.0 * kPi;
constexpr double kHalfPi = 0.5 * kPi;

double mod2pi(double x) {
  double v = std::fmod(x, kTwoPi);
  if (v < -kPi)
    v += kTwoPi;
  else if (v > kPi)
    v -= kTwoPi;
  return v;
}

void polar(double x, double y, double& r, double& theta) {
  r = std::hypot(x, y);
  theta = std::atan2(y, x);
}

void tau_omega(double u, double v, double xi, double eta, double phi,
               double& tau, double& omega) {
  const double delta = mod2pi(u - v);
  const double A = std::sin(u) - std::sin(delta);
  const double B = std::cos(u) - std::cos(delta) - 1.0;
  const double t1 = std::atan2(eta * A - xi * B, xi * A + eta * B);
  const double t2 = 2.0 * (std::cos(delta) - std::cos(v) - std::cos(u)) + 3.0;
  tau = (t2 < 0.0) ? mod2pi(t1 + kPi) : mod2pi(t1);
  omega = mod2pi(tau - u + v - phi);
}

using Word = std::array<RsSeg, 5>;

constexpr RsSeg N = RsSeg::None;
constexpr RsSeg L = RsSeg::Left;
constexpr RsSeg S = RsSeg::Straight;
constexpr RsSeg R = RsSeg::Right;

struct Candidate {
  Word word{N, N, N, N, N};
  std::array<double, 5> len{0, 0, 0, 0, 0};
  double total = std::numeric_limits<double>::infinity();
};

void consider(Candidate& best, const Word& word,
              std::initializer_list<double> lengths) {
  double total = 0.0;
  for (double l : lengths) total += std::abs(l);
  if (total >= best.total) return;
  best.total = total;
  best.word = word;
  best.len = {0, 0, 0, 0, 0};
  size_t i = 0;
  for (double l : lengths) best.len[i++] = l;
}

// --- base solutions -------------------------------------------------------

bool LpSpLp(double x, double y, double phi, double& t, double& u, double& v) {
  polar(x - std::sin(phi), y - 1.0 + std::cos(phi), u, t);
  if (t >= -kZero) {
    v = mod2pi(phi - t);
    if (v >= -kZero) return true;
  }
  return false;
}

bool LpSpRp(double x, double y, double phi, double& t, double& u, double& v) {
  double t1, u1;
  polar(x + std::sin(phi), y - 1.0 - std::cos(phi), u1, t1);
  if (u1 * u1 >= 4.0) {
    u = std::sqrt(u1 * u1 - 4.0);
    const double theta = std::atan2(2.0, u);
    t = mod2pi(t1 + theta);
    v = mod2pi(t - phi);
    return t >= -kZero && v >= -kZero;
  }
  return false;
}

bool LpRmL(double x, double y, double phi, double& t, double& u, double& v) {
  const double xi = x - std::sin(phi);
  const double eta = y - 1.0 + std::cos(phi);
  double u1, theta;
  polar(xi, eta, u1, theta);
  if (u1 <= 4.0) {
    u = -2.0 * std::asin(0.25 * u1);
    t = mod2pi(theta + 0.5 * u + kPi);
    v = mod2pi(phi - t + u);
    return t >= -kZero && u <= kZero;
  }
  return false;
}

bool LpRupLumRm(double x, double y, double phi, double& t, double& u,
                double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  const double rho = 0.25 * (2.0 + std::hypot(xi, eta));
  if (rho <= 1.0) {
    u = std::acos(rho);
    tau_omega(u, -u, xi, eta, phi, t, v);
    return t >= -kZero && v <= kZero;
  }
  return false;
}

bool LpRumLumRp(double x, double y, double phi, double& t, double& u,
                double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  const double rho = (20.0 - xi * xi - eta * eta) / 16.0;
  if (rho >= 0.0 && rho <= 1.0) {
    u = -std::acos(rho);
    if (u >= -kHalfPi) {
      tau_omega(u, u, xi, eta, phi, t, v);
      return t >= -kZero && v >= -kZero;
    }
  }
  return false;
}

bool LpRmSmLm(double x, double y, double phi, double& t, double& u,
              double& v) {
  const double xi = x - std::sin(phi);
  const double eta = y - 1.0 + std::cos(phi);
  double rho, theta;
  polar(xi, eta, rho, theta);
  if (rho >= 2.0) {
    const double r = std::sqrt(rho * rho - 4.0);
    u = 2.0 - r;
    t = mod2pi(theta + std::atan2(r, -2.0));
    v = mod2pi(phi - kHalfPi - t);
    return t >= -kZero && u <= kZero && v <= kZero;
  }
  return false;
}

bool LpRmSmRm(double x, double y, double phi, double& t, double& u,
              double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  double rho, theta;
  polar(-eta, xi, rho, theta);
  if (rho >= 2.0) {
    t = theta;
    u = 2.0 - rho;
    v = mod2pi(t + kHalfPi - phi);
    return t >= -kZero && u <= kZero && v <= kZero;
  }
  return false;
}

bool LpRmSLmRp(double x, double y, double phi, double& t, double& u,
               double& v) {
  const double xi = x + std::sin(phi);
  const double eta = y - 1.0 - std::cos(phi);
  double rho, theta;
  polar(xi, eta, rho, theta);
  if (rho >= 2.0) {
    u = 4.0 - std::sqrt(rho * rho - 4.0);
    if (u <= kZero) {
      t = mod2pi(
          std::atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta));
      v = mod2pi(t - phi);
      return t >= -kZero && v >= -kZero;
    }
  }
  return false;
}

// --- families (base + timeflip + reflect + both) --------------------------

Word reflect_word(const Word& w) {
  Word out;
  for (size_t i = 0; i < 5; ++i) {
    if (w[i] == L)
      out[i] = R;
    else if (w[i] == R)
      out[i] = L;
    else
      out[i] = w[i];
  }
  return out;
}

void CSC(double x, double y, double phi, Candidate& best) {
  double t, u, v;
  const Word lsl{L, S, L, N, N};
  const Word lsr{L, S, R, N, N};
  if (LpSpLp(x, y, phi, t, u, v)) consider(best, lsl, {t, u, v});
  if (LpSpLp(-x, y, -phi, t, u, v)) consider(best, lsl, {-t, -u, -v});
  if (LpSpLp(x, -y, -phi, t, u, v)) consider(best, reflect_word(lsl), {t, u, v});
  if (LpSpLp(-x, -y, phi, t, u, v))
    consider(best, reflect_word(lsl), {-t, -u, -v});
  if (LpSpRp(x, y, phi, t, u, v)) consider(best, lsr, {t, u, v});
  if (LpSpRp(-x, y, -phi, t, u, v)) consider(best, lsr, {-t, -u, -v});
  if (LpSpRp(x, -y, -phi, t, u, v)) consider(best, reflect_word(lsr), {t, u, v});
  if (LpSpRp(-x, -y, phi, t, u, v))
    consider(best, reflect_word(lsr), {-t, -u, -v});
}

void CCC(double x, double y, double phi, Candidate& best) {
  double t, u, v;
  const Word lrl{L, R, L, N, N};
  if (LpRmL(x, y, phi, t, u, v)) consider(best, lrl, {t, u, v});
  if (LpRmL(-x, y, -phi, t, u, v)) consider(best, lrl, {-t, -u, -v});
  if (LpRmL(x, -y, -phi, t, u, v)) consider(best, reflect_word(lrl), {t, u, v});
  if (LpRmL(-x, -y, phi, t, u, v))
    consider(best, reflect_word(lrl), {-t, -u, -v});

  // Backwards variants: solve for the reversed endpoint.
  const double xb = x * std::cos(phi) + y * std::sin(phi);
  const double yb = x * std::sin(phi) - y * std::cos(phi);
  if (LpRmL(xb, yb, phi, t, u, v)) consider(best, lrl, {v, u, t});
  if (LpRmL(-xb, yb, -phi, t, u, v)) consider(best, lrl, {-v, -u, -t});
  if (LpRmL(xb, -yb, -phi, t, u, v)) consider(best, reflect_word(lrl), {v, u, t});
  if (LpRmL(-xb, -yb, phi, t, u, v))
    consider(best, reflect_word(lrl), {-v, -u, -t});
}

void CCCC(double x, double y, double phi, Candidate& best) {
  double t, u, v;
  const Word lrlr{L, R, L, R, N};
  if (LpRupLumRm(x, y, phi, t, u, v)) consider(best, lrlr, {t, u, -u, v});
  if (LpRupLumRm(-x, y, -phi, t, u, v)) consider(best, lrlr, {-t, -u, u, -v});
  if (LpRupLumRm(x, -y, -phi, t, u, v))
    consider(best, reflect_word(lrlr), {t, u, -u, v});
  if (LpRupLumRm(-x, -y, phi, t, u, v))
    consider(best, reflect_word(lrlr), {-t, -u, u, -v});

  if (LpRumLumRp(x, y, phi, t, u, v)) consider(best, lrlr, {t, u, u, v});
  if (LpRumLumRp(-x, y, -phi, t, u, v)) consider(best, lrlr, {-t, -u, -u, -v});
  if (LpRumLumRp(x, -y, -phi, t, u, v))
    consider(best, reflect_word(lrlr), {t, u, u, v});
  if (LpRumLumRp(-x, -y, phi, t, u, v))
    consider(best, reflect_word(lrlr), {-t, -u, -u, -v});
}

void CCSC(double x, double y, double phi, Candidate& best) {
  double t, u, v;
  const Word lrsl{L, R, S, L, N};
  const Word lrsr{L, R, S, R, N};
  const Word lsrl{L, S, R, L, N};  // reversed LRSL
  const Word rsrl{R, S, R, L, N};  // reversed LRSR

  if (LpRmSmLm(x, y, phi, t, u, v))
    consider(best, lrsl, {t, -kHalfPi, u, v});
  if (LpRmSmLm(-x, y, -phi, t, u, v))
    consider(best, lrsl, {-t, kHalfPi, -u, -v});
  if (LpRmSmLm(x, -y, -phi, t, u, v))
    consider(best, reflect_word(lrsl), {t, -kHalfPi, u, v});
  if (LpRmSmLm(-x, -y, phi, t, u, v))
    consider(best, reflect_word(lrsl), {-t, kHalfPi, -u, -v});

  if (LpRmSmRm(x, y, phi, t, u, v))
    consider(best, lrsr, {t, -kHalfPi, u, v});
  if (LpRmSmRm(-x, y, -phi, t, u, v))
    consider(best, lrsr, {-t, kHalfPi, -u, -v});
  if (LpRmSmRm(x, -y, -phi, t, u, v))
    consider(best, reflect_word(lrsr), {t, -kHalfPi, u, v});
  if (LpRmSmRm(-x, -y, phi, t, u, v))
    consider(best, reflect_word(lrsr), {-t, kHalfPi, -u, -v});

  // Backwards variants.
  const double xb = x * std::cos(phi) + y * std::sin(phi);
  const double yb = x * std::sin(phi) - y * std::cos(phi);
  if (LpRmSmLm(xb, yb, phi, t, u, v))
    consider(best, lsrl, {v, u, -kHalfPi, t});
  if (LpRmSmLm(-xb, yb, -phi, t, u, v))
    consider(best, lsrl, {-v, -u, kHalfPi, -t});
  if (LpRmSmLm(xb, -yb, -phi, t, u, v))
    consider(best, reflect_word(lsrl), {v, u, -kHalfPi, t});
  if (LpRmSmLm(-xb, -yb, phi, t, u, v))
    consider(best, reflect_word(lsrl), {-v, -u, kHalfPi, -t});

  if (LpRmSmRm(xb, yb, phi, t, u, v))
    consider(best, rsrl, {v, u, -kHalfPi, t});
  if (LpRmSmRm(-xb, yb, -phi, t, u, v))
    consider(best, rsrl, {-v, -u, kHalfPi, -t});
  if (LpRmSmRm(xb, -yb, -phi, t, u, v))
    consider(best, reflect_word(rsrl), {v, u, -kHalfPi, t});
  if (LpRmSmRm(-xb, -yb, phi, t, u, v))
    consider(best, reflect_word(rsrl), {-v, -u, kHalfPi, -t});
}

void CCSCC(double x, double y, double phi, Candidate& best) {
  double t, u, v;
  const Word lrslr{L, R, S, L, R};
  if (LpRmSLmRp(x, y, phi, t, u, v))
    consider(best, lrslr, {t, -kHalfPi, u, -kHalfPi, v});
  if (LpRmSLmRp(-x, y, -phi, t, u, v))
    consider(best, lrslr, {-t, kHalfPi, -u, kHalfPi, -v});
  if (LpRmSLmRp(x, -y, -phi, t, u, v))
    consider(best, reflect_word(lrslr), {t, -kHalfPi, u, -kHalfPi, v});
  if (LpRmSLmRp(-x, -y, phi, t, u, v))
    consider(best, reflect_word(lrslr), {-t, kHalfPi, -u, kHalfPi, -v});
}

}  // namespace

ReedsSheppPath reeds_shepp(const Pose2D& from, const Pose2D& to,
                           double radius) {
  // Normalize to the unit-radius frame of `from`.
  const Pose2D rel = from.between(to);
  const double x = rel.x / radius;
  const double y = rel.y / radius;
  const double phi = rel.theta;

  Candidate best;
  CSC(x, y, phi, best);
  CCC(x, y, phi, best);
  CCCC(x, y, phi, best);
  CCSC(x, y, phi, best);
  CCSCC(x, y, phi, best);

  ReedsSheppPath path;
  path.type = best.word;
  path.length = best.len;
  path.total = best.total;
  return path;
}

double reeds_shepp_distance(const Pose2D& from, const Pose2D& to,
                            double radius) {
  return reeds_shepp(from, to, radius).total * radius;
}

std::vector<RsSample> reeds_shepp_sample(const Pose2D& from,
                                         const ReedsSheppPath& path,
                                         double radius, double step) {
  std::vector<RsSample> out;
  Pose2D pose = from;
  for (size_t i = 0; i < path.type.size(); ++i) {
    if (path.type[i] == RsSeg::None || std::abs(path.length[i]) < 1e-12)
      continue;
    const double seg_len = path.length[i] * radius;  // signed world length
    const double dir = seg_len >= 0.0 ? 1.0 : -1.0;
    double curvature = 0.0;
    if (path.type[i] == RsSeg::Left) curvature = 1.0 / radius;
    if (path.type[i] == RsSeg::Right) curvature = -1.0 / radius;

    const double total = std::abs(seg_len);
    const int n = std::max(1, static_cast<int>(std::ceil(total / step)));
    const double h = total / n;
    for (int k = 1; k <= n; ++k) {
      const double ds = dir * h;
      if (curvature == 0.0) {
        pose = Pose2D(pose.x + ds * std::cos(pose.theta),
                      pose.y + ds * std::sin(pose.theta), pose.theta);
      } else {
        const double dth = curvature * ds;
        const double r = 1.0 / curvature;
        pose = Pose2D(
            pose.x + r * (std::sin(pose.theta + dth) - std::sin(pose.theta)),
            pose.y - r * (std::cos(pose.theta + dth) - std::cos(pose.theta)),
            pose.theta + dth);
      }
      out.push_back({pose, dir < 0.0, curvature});
    }
  }
  return out;
}

}  // namespace forksim::planning
