#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "forksim/estimation.hpp"

using namespace forksim;
using namespace forksim::estimation;

namespace {

Eigen::Matrix3d iso3(double var) { return var * Eigen::Matrix3d::Identity(); }
Eigen::Matrix4d iso4(double var) { return var * Eigen::Matrix4d::Identity(); }

// Dense batch Gauss-Newton oracle. Shares only the residual definitions with
// the implementation; Jacobians come from central finite differences and the
// solve is a plain dense normal-equation iteration from the same initial
// values.
struct BatchOracle {
  std::vector<VarId> ids;
  std::vector<int> offsets;
  std::vector<int> dims;
  int total_dim = 0;

  const FactorGraph& graph;

  explicit BatchOracle(const FactorGraph& g) : graph(g) {
    for (const auto& [id, v] : g.variables()) {
      ids.push_back(id);
      offsets.push_back(total_dim);
      dims.push_back(v.dim());
      total_dim += v.dim();
    }
  }

  int offset_of(VarId id) const {
    for (size_t i = 0; i < ids.size(); ++i)
      if (ids[i] == id) return offsets[i];
    REQUIRE(false);
    return -1;
  }

  Eigen::VectorXd initial() const {
    Eigen::VectorXd x(total_dim);
    int k = 0;
    for (const auto& [id, v] : graph.variables()) {
      x[offsets[k]] = v.estimate.x;
      x[offsets[k] + 1] = v.estimate.y;
      x[offsets[k] + 2] = v.estimate.theta;
      if (v.dim() == 4) x[offsets[k] + 3] = v.z;
      ++k;
    }
    return x;
  }

  static Eigen::MatrixXd whitener(const Eigen::MatrixXd& cov) {
    return Eigen::LLT<Eigen::MatrixXd>(cov.inverse()).matrixU();
  }

  Eigen::VectorXd residuals(const Eigen::VectorXd& x) const {
    std::vector<double> out;
    auto push = [&](const Eigen::VectorXd& r) {
      for (int i = 0; i < r.size(); ++i) out.push_back(r[i]);
    };
    for (const auto& f : graph.odometry_factors()) {
      const int i = offset_of(f.from), j = offset_of(f.to);
      const double c = std::cos(x[i + 2]), s = std::sin(x[i + 2]);
      const double dx = x[j] - x[i], dy = x[j + 1] - x[i + 1];
      Eigen::Vector3d r(c * dx + s * dy - f.delta.x,
                        -s * dx + c * dy - f.delta.y,
                        normalize_angle(x[j + 2] - x[i + 2] - f.delta.theta));
      push(whitener(f.cov) * r);
    }
    for (const auto& f : graph.gnss_factors()) {
      const int i = offset_of(f.var);
      Eigen::Vector3d r(x[i] - f.meas[0], x[i + 1] - f.meas[1],
                        normalize_angle(x[i + 2] - f.meas[2]));
      push(whitener(f.cov) * r);
    }
    for (const auto& f : graph.pallet_factors()) {
      const int i = offset_of(f.pose_var), p = offset_of(f.pallet_var);
      const double c = std::cos(x[i + 2]), s = std::sin(x[i + 2]);
      const double dx = x[p] - x[i], dy = x[p + 1] - x[i + 1];
      Eigen::Vector4d r(c * dx + s * dy - f.rel.x, -s * dx + c * dy - f.rel.y,
                        normalize_angle(x[p + 2] - x[i + 2] - f.rel.theta),
                        x[p + 3] - f.z_rel);
      push(whitener(f.cov) * r);
    }
    for (const auto& f : graph.prior_factors()) {
      Eigen::VectorXd delta(f.sqrt_info.cols());
      int off = 0;
      for (size_t k = 0; k < f.vars.size(); ++k) {
        const int i = offset_of(f.vars[k]);
        const int d = graph.variables().at(f.vars[k]).dim();
        delta[off] = x[i] - f.anchors[k][0];
        delta[off + 1] = x[i + 1] - f.anchors[k][1];
        delta[off + 2] = normalize_angle(x[i + 2] - f.anchors[k][2]);
        if (d == 4) delta[off + 3] = x[i + 3] - f.anchors[k][3];
        off += d;
      }
      push(f.sqrt_info * delta + f.rhs);
    }
    return Eigen::Map<Eigen::VectorXd>(out.data(), out.size());
  }

  Eigen::MatrixXd jacobian_fd(const Eigen::VectorXd& x) const {
    const double h = 1e-6;
    const Eigen::VectorXd r0 = residuals(x);
    Eigen::MatrixXd J(r0.size(), x.size());
    for (int c = 0; c < x.size(); ++c) {
      Eigen::VectorXd xp = x, xm = x;
      xp[c] += h;
      xm[c] -= h;
      J.col(c) = (residuals(xp) - residuals(xm)) / (2.0 * h);
    }
    return J;
  }

  Eigen::VectorXd solve() const {
    Eigen::VectorXd x = initial();
    for (int iter = 0; iter < 200; ++iter) {
      const Eigen::VectorXd r = residuals(x);
      const Eigen::MatrixXd J = jacobian_fd(x);
      Eigen::MatrixXd H = J.transpose() * J;
      H.diagonal().array() += 1e-12;
      const Eigen::VectorXd dx = H.ldlt().solve(-J.transpose() * r);
      x += dx;
      for (size_t k = 0; k < ids.size(); ++k)
        x[offsets[k] + 2] = normalize_angle(x[offsets[k] + 2]);
      if (dx.lpNorm<Eigen::Infinity>() < 1e-12) break;
    }
    return x;
  }
};

double max_param_diff(const FactorGraph& graph, const Estimates& est,
                      const BatchOracle& oracle, const Eigen::VectorXd& x) {
  double worst = 0.0;
  size_t k = 0;
  for (const auto& [id, v] : graph.variables()) {
    const int off = oracle.offsets[k++];
    const Pose2D p = est.poses.at(id);
    worst = std::max({worst, std::abs(p.x - x[off]), std::abs(p.y - x[off + 1]),
                      std::abs(normalize_angle(p.theta - x[off + 2]))});
    if (v.dim() == 4)
      worst = std::max(worst, std::abs(est.pallet_z.at(id) - x[off + 3]));
  }
  return worst;
}

}  // namespace

TEST_CASE("single pose with one position fix lands on the measurement") {
  FactorGraph g;
  const VarId x0 = g.add_pose_variable(0.0, Pose2D(5, 5, 1.0));
  g.add_gnss(x0, Eigen::Vector3d(1.0, 2.0, 0.3), iso3(0.01), 0.0);
  const Estimates est = g.optimize();
  CHECK(est.converged);
  CHECK(est.poses.at(x0).x == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(est.poses.at(x0).y == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(est.poses.at(x0).theta == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("two equal-weight fixes average") {
  FactorGraph g;
  const VarId x0 = g.add_pose_variable(0.0, Pose2D(0, 0, 0));
  g.add_gnss(x0, Eigen::Vector3d(0.0, 0.0, 0.0), iso3(1.0), 0.0);
  g.add_gnss(x0, Eigen::Vector3d(2.0, 0.0, 0.0), iso3(1.0), 0.0);
  const Estimates est = g.optimize();
  CHECK(est.poses.at(x0).x == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("unequal weights fuse at the variance-weighted mean") {
  // Variances 1 and 4: estimate = (4*m1 + 1*m2) / 5.
  FactorGraph g;
  const VarId x0 = g.add_pose_variable(0.0, Pose2D(0, 0, 0));
  g.add_gnss(x0, Eigen::Vector3d(0.0, 0.0, 0.0), iso3(1.0), 0.0);
  g.add_gnss(x0, Eigen::Vector3d(2.0, 0.0, 0.0), iso3(4.0), 0.0);
  const Estimates est = g.optimize();
  CHECK(est.poses.at(x0).x == doctest::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("odometry chain initializes by composition") {
  FactorGraph g;
  VarId prev = g.add_pose_variable(0.0, Pose2D(0, 0, 0));
  for (int i = 1; i <= 5; ++i)
    prev = g.add_odometry(prev, i, Pose2D(1, 0, 0), iso3(0.01));
  CHECK(g.variables().at(prev).estimate.x == doctest::Approx(5.0));
  CHECK(g.pose_count() == 6);
  CHECK(g.check_structure());
}

TEST_CASE("non-PSD covariance is rejected") {
  FactorGraph g;
  const VarId x0 = g.add_pose_variable(0.0, Pose2D(0, 0, 0));
  Eigen::Matrix3d bad = -Eigen::Matrix3d::Identity();
  CHECK_THROWS_AS(g.add_gnss(x0, Eigen::Vector3d::Zero(), bad, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(g.add_odometry(x0, 1.0, Pose2D(1, 0, 0), bad),
                  std::invalid_argument);
}

TEST_CASE("noise-free five-pose graph with one pallet recovers exactly") {
  // Ground truth: poses at x = 0..4 along +x; pallet at (3, 2, pi/2, z=0.1).
  // Position fixes at timesteps 0 and 2; the pallet is observed from the
  // poses at timesteps 1 and 2.
  FactorGraph g;
  const Pose2D pallet_gt(3.0, 2.0, kPi / 2.0);
  VarId x0 = g.add_pose_variable(0.0, Pose2D(0, 0, 0));
  std::vector<VarId> poses{x0};
  for (int i = 1; i <= 4; ++i)
    poses.push_back(g.add_odometry(poses.back(), i, Pose2D(1, 0, 0), iso3(0.01)));
  g.add_gnss(poses[0], Eigen::Vector3d(0, 0, 0), iso3(0.01), 0.0);
  g.add_gnss(poses[2], Eigen::Vector3d(2, 0, 0), iso3(0.01), 2.0);
  const Pose2D gt1(1, 0, 0), gt2(2, 0, 0);
  const VarId p0 = g.add_pallet_variable(1.0, Pose2D(2.9, 2.2, 1.5), 0.12);
  g.add_pallet_obs(poses[1], p0, gt1.between(pallet_gt), 0.1, iso4(0.01), 1.0);
  g.add_pallet_obs(poses[2], p0, gt2.between(pallet_gt), 0.1, iso4(0.01), 2.0);

  const Estimates est = g.optimize();
  CHECK(est.converged);
  for (int i = 0; i <= 4; ++i) {
    CHECK(est.poses.at(poses[i]).x == doctest::Approx(i).epsilon(1e-8));
    CHECK(std::abs(est.poses.at(poses[i]).y) < 1e-8);
    CHECK(std::abs(est.poses.at(poses[i]).theta) < 1e-8);
  }
  CHECK(est.poses.at(p0).x == doctest::Approx(3.0).epsilon(1e-8));
  CHECK(est.poses.at(p0).y == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(est.poses.at(p0).theta == doctest::Approx(kPi / 2).epsilon(1e-8));
  CHECK(est.pallet_z.at(p0) == doctest::Approx(0.1).epsilon(1e-8));
}

TEST_CASE("conflicting pallet observations settle at the midpoint") {
  FactorGraph g;
  const VarId x0 = g.add_pose_variable(0.0, Pose2D(0, 0, 0));
  g.add_gnss(x0, Eigen::Vector3d(0, 0, 0), iso3(1e-6), 0.0);
  const VarId p0 = g.add_pallet_variable(0.0, Pose2D(5, 0, 0), 0.0);
  g.add_pallet_obs(x0, p0, Pose2D(5.0, 0.4, 0), 0.0, iso4(0.01), 0.0);
  g.add_pallet_obs(x0, p0, Pose2D(5.0, -0.4, 0), 0.0, iso4(0.01), 0.0);
  const Estimates est = g.optimize();
  CHECK(est.poses.at(p0).x == doctest::Approx(5.0).epsilon(1e-6));
  CHECK(std::abs(est.poses.at(p0).y) < 1e-9);
}

TEST_CASE("incremental solve matches the dense batch oracle") {
  std::mt19937 rng(41);
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  FactorGraph g;
  std::vector<Pose2D> gt;
  gt.push_back(Pose2D(0, 0, 0));
  std::vector<VarId> poses{g.add_pose_variable(0.0, gt[0])};
  g.add_gnss(poses[0], Eigen::Vector3d(0, 0, 0), iso3(0.01), 0.0);

  for (int i = 1; i < 20; ++i) {
    const Pose2D delta(0.8 + 0.2 * u01(rng), 0.05 * n01(rng), 0.1 * n01(rng));
    gt.push_back(gt.back().compose(delta));
    const Pose2D noisy(delta.x + 0.02 * n01(rng), delta.y + 0.02 * n01(rng),
                       delta.theta + 0.01 * n01(rng));
    poses.push_back(g.add_odometry(poses.back(), i, noisy, iso3(0.02)));
    if (i % 5 == 0)
      g.add_gnss(poses.back(),
                 Eigen::Vector3d(gt.back().x + 0.05 * n01(rng),
                                 gt.back().y + 0.05 * n01(rng),
                                 gt.back().theta + 0.02 * n01(rng)),
                 iso3(0.05), i);
  }
  std::vector<VarId> pallets;
  for (int p = 0; p < 5; ++p) {
    const Pose2D pallet_gt(2.0 + 3.0 * p, 2.0 + n01(rng), u01(rng));
    const double z_gt = 0.1 * p;
    VarId pv = -1;
    for (int obs = 0; obs < 3; ++obs) {
      const size_t from = std::min<size_t>(gt.size() - 1, 3 * p + obs);
      const Pose2D rel = gt[from].between(pallet_gt);
      const Pose2D noisy(rel.x + 0.03 * n01(rng), rel.y + 0.03 * n01(rng),
                         rel.theta + 0.02 * n01(rng));
      if (pv < 0)
        pv = g.add_pallet_variable(from, gt[from].compose(noisy),
                                   z_gt + 0.02 * n01(rng));
      g.add_pallet_obs(poses[from], pv, noisy, z_gt + 0.02 * n01(rng),
                       iso4(0.03), from);
    }
    pallets.push_back(pv);
  }
  REQUIRE(g.check_structure());

  const BatchOracle oracle(g);
  const Eigen::VectorXd x_batch = oracle.solve();
  const Estimates est = g.optimize();
  CHECK(est.converged);
  CHECK(max_param_diff(g, est, oracle, x_batch) < 1e-6);
}

TEST_CASE("association gating") {
  FactorGraph g;
  const VarId x0 = g.add_pose_variable(0.0, Pose2D(0, 0, 0));
  Estimates est;
  est.poses[x0] = Pose2D(0, 0, 0);

  PalletDetectionMeas det;
  det.rel = Pose2D(5, 0, 0);
  det.z_rel = 0.1;
  det.cov = iso4(1.0);

  SUBCASE("fresh detection opens a new track, repeat associates at zero") {
    const auto first = g.associate_detection(est, x0, det, 0.0);
    CHECK(first.kind == AssociationResult::Kind::New);
    const auto second = g.associate_detection(est, x0, det, 0.1);
    CHECK(second.kind == AssociationResult::Kind::Associated);
    CHECK(second.pallet_var == first.pallet_var);
    CHECK(second.d2 == doctest::Approx(0.0));
  }

  SUBCASE("residual beyond the 95% chi-square gate opens a new track") {
    const auto first = g.associate_detection(est, x0, det, 0.0);
    PalletDetectionMeas far = det;
    far.rel = Pose2D(8, 0, 0);  // residual (3,0,0) with unit innovation: d2=9
    const auto res = g.associate_detection(est, x0, far, 0.1);
    CHECK(res.kind == AssociationResult::Kind::New);
    CHECK(res.pallet_var != first.pallet_var);
  }

  SUBCASE("nearest track wins when several gate") {
    const auto a = g.associate_detection(est, x0, det, 0.0);
    PalletDetectionMeas b = det;
    b.rel = Pose2D(5, 3.0, 0);
    const auto bt = g.associate_detection(est, x0, b, 0.1);
    REQUIRE(bt.kind == AssociationResult::Kind::New);
    PalletDetectionMeas probe = det;
    probe.rel = Pose2D(5, 1.0, 0);  // d2 = 1.0 to a, 1.96 to b
    const auto res = g.associate_detection(est, x0, probe, 0.2);
    CHECK(res.kind == AssociationResult::Kind::Associated);
    CHECK(res.pallet_var == a.pallet_var);
  }

  SUBCASE("z separation beyond the hard cut rejects association") {
    g.associate_detection(est, x0, det, 0.0);
    PalletDetectionMeas high = det;
    high.z_rel = 1.2;
    const auto res = g.associate_detection(est, x0, high, 0.1);
    CHECK(res.kind == AssociationResult::Kind::New);
  }
}

TEST_CASE("track bookkeeping") {
  GraphParams params;
  FactorGraph g(params);
  const VarId x0 = g.add_pose_variable(0.0, Pose2D(0, 0, 0));
  Estimates est;
  est.poses[x0] = Pose2D(0, 0, 0);
  const std::vector<Vec2> frustum{{0.5, 0.0}, {12.0, -6.0}, {12.0, 6.0}};

  PalletDetectionMeas det;
  det.rel = Pose2D(5, 0, 0);
  det.cov = iso4(0.5);

  SUBCASE("three associations confirm a candidate") {
    const auto first = g.associate_detection(est, x0, det, 0.0);
    CHECK(g.tracks().at(first.pallet_var).status == TrackStatus::Candidate);
    g.associate_detection(est, x0, det, 0.1);
    g.associate_detection(est, x0, det, 0.2);
    CHECK(g.tracks().at(first.pallet_var).status == TrackStatus::Confirmed);
    CHECK(g.confirmed_pallets().size() == 1);
  }

  SUBCASE("misses inside the view polygon delete the track") {
    const auto first = g.associate_detection(est, x0, det, 0.0);
    est.poses[first.pallet_var] = Pose2D(5, 0, 0);
    for (int i = 0; i < params.n_miss; ++i)
      g.bookkeeping(est, Pose2D(0, 0, 0), frustum, {}, 0.1 * i);
    CHECK(g.tracks().at(first.pallet_var).status == TrackStatus::Deleted);
  }

  SUBCASE("tracks behind the vehicle persist indefinitely") {
    const auto first = g.associate_detection(est, x0, det, 0.0);
    est.poses[first.pallet_var] = Pose2D(5, 0, 0);
    // Vehicle turned away: the pallet is now behind it.
    for (int i = 0; i < 1000; ++i)
      g.bookkeeping(est, Pose2D(0, 0, kPi), frustum, {}, 0.1 * i);
    CHECK(g.tracks().at(first.pallet_var).status != TrackStatus::Deleted);
  }
}

TEST_CASE("pruning collapses old poses into a boundary prior") {
  GraphParams params;
  FactorGraph g(params);
  std::mt19937 rng(7);
  std::normal_distribution<double> n01(0.0, 1.0);

  std::vector<VarId> poses{g.add_pose_variable(0.0, Pose2D(0, 0, 0))};
  g.add_gnss(poses[0], Eigen::Vector3d(0, 0, 0), iso3(0.01), 0.0);
  VarId pallet = -1;
  for (int i = 1; i < 100; ++i) {
    const Pose2D delta(1.0, 0.01 * n01(rng), 0.01 * n01(rng));
    poses.push_back(g.add_odometry(poses.back(), i, delta, iso3(0.02)));
    if (i % 10 == 0)
      g.add_gnss(poses.back(), Eigen::Vector3d(i, 0, 0), iso3(0.05), i);
    if (i == 8) {
      // Pallet anchored to an early pose that will be pruned away.
      pallet = g.add_pallet_variable(i, Pose2D(8, 3, 0.2), 0.1);
      g.add_pallet_obs(poses[i], pallet, Pose2D(0, 3, 0.2), 0.1, iso4(0.02), i);
      g.add_pallet_obs(poses[i], pallet, Pose2D(0.05, 3, 0.2), 0.1, iso4(0.02), i);
    }
  }
  const Estimates before = g.optimize();
  REQUIRE(before.converged);

  g.prune_and_cull(99.0);
  CHECK(g.pose_count() <= params.smoothing_window + 1);
  CHECK(g.check_structure());

  const Estimates after = g.optimize();
  for (const auto& [id, v] : g.variables()) {
    CHECK(std::abs(after.poses.at(id).x - before.poses.at(id).x) < 1e-6);
    CHECK(std::abs(after.poses.at(id).y - before.poses.at(id).y) < 1e-6);
    CHECK(std::abs(normalize_angle(after.poses.at(id).theta -
                                   before.poses.at(id).theta)) < 1e-6);
  }
  // The pallet survives pruning with its estimate intact.
  REQUIRE(g.variables().count(pallet) == 1);
  CHECK(std::abs(after.poses.at(pallet).x - before.poses.at(pallet).x) < 1e-6);
  CHECK(std::abs(after.poses.at(pallet).y - before.poses.at(pallet).y) < 1e-6);
}

TEST_CASE("pruning with nothing eligible is a no-op") {
  FactorGraph g;
  std::vector<VarId> poses{g.add_pose_variable(0.0, Pose2D(0, 0, 0))};
  g.add_gnss(poses[0], Eigen::Vector3d(0, 0, 0), iso3(0.01), 0.0);
  for (int i = 1; i < 5; ++i)
    poses.push_back(g.add_odometry(poses.back(), 0.1 * i, Pose2D(1, 0, 0), iso3(0.01)));
  const size_t n_odom = g.odometry_factors().size();
  g.prune_and_cull(0.5);
  CHECK(g.odometry_factors().size() == n_odom);
  CHECK(g.pose_count() == 5);
  CHECK(g.prior_factors().empty());
}
