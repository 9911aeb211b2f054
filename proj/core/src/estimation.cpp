#include "forksim/estimation.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace forksim::estimation {

namespace {

Eigen::Matrix2d rot(double a) {
  Eigen::Matrix2d r;
  r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
  return r;
}

Eigen::MatrixXd sqrt_information(const Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd info = cov.inverse();
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  return llt.matrixU();
}

struct Block {
  VarId var;
  Eigen::MatrixXd J;
};

struct Linearized {
  Eigen::VectorXd r;
  std::vector<Block> blocks;
};

Eigen::Vector4d value_of(const Variable& v, bool at_estimates) {
  if (at_estimates)
    return {v.estimate.x, v.estimate.y, v.estimate.theta, v.z};
  return {v.lin_pose.x, v.lin_pose.y, v.lin_pose.theta, v.lin_z};
}

Linearized linearize_odometry(const OdometryFactor& f, const Eigen::Vector4d& xi,
                              const Eigen::Vector4d& xj) {
  const Eigen::Vector2d d(xj[0] - xi[0], xj[1] - xi[1]);
  const Eigen::Matrix2d Ri = rot(-xi[2]);
  const Eigen::Vector2d pred = Ri * d;

  Eigen::Vector3d r;
  r[0] = pred[0] - f.delta.x;
  r[1] = pred[1] - f.delta.y;
  r[2] = normalize_angle(xj[2] - xi[2] - f.delta.theta);

  Eigen::Matrix3d Ji = Eigen::Matrix3d::Zero();
  Ji.block<2, 2>(0, 0) = -Ri;
  Ji(0, 2) = pred[1];
  Ji(1, 2) = -pred[0];
  Ji(2, 2) = -1.0;

  Eigen::Matrix3d Jj = Eigen::Matrix3d::Zero();
  Jj.block<2, 2>(0, 0) = Ri;
  Jj(2, 2) = 1.0;

  const Eigen::Matrix3d W = sqrt_information(f.cov);
  Linearized out;
  out.r = W * r;
  out.blocks.push_back({f.from, W * Ji});
  out.blocks.push_back({f.to, W * Jj});
  return out;
}

Linearized linearize_gnss(const GnssFactor& f, const Eigen::Vector4d& x) {
  Eigen::Vector3d r(x[0] - f.meas[0], x[1] - f.meas[1],
                    normalize_angle(x[2] - f.meas[2]));
  const Eigen::Matrix3d W = sqrt_information(f.cov);
  Linearized out;
  out.r = W * r;
  out.blocks.push_back({f.var, W * Eigen::Matrix3d::Identity()});
  return out;
}

Linearized linearize_pallet(const PalletObsFactor& f, const Eigen::Vector4d& xi,
                            const Eigen::Vector4d& xp) {
  const Eigen::Vector2d d(xp[0] - xi[0], xp[1] - xi[1]);
  const Eigen::Matrix2d Ri = rot(-xi[2]);
  const Eigen::Vector2d pred = Ri * d;

  Eigen::Vector4d r;
  r[0] = pred[0] - f.rel.x;
  r[1] = pred[1] - f.rel.y;
  r[2] = normalize_angle(xp[2] - xi[2] - f.rel.theta);
  r[3] = xp[3] - f.z_rel;

  Eigen::Matrix<double, 4, 3> Ji = Eigen::Matrix<double, 4, 3>::Zero();
  Ji.block<2, 2>(0, 0) = -Ri;
  Ji(0, 2) = pred[1];
  Ji(1, 2) = -pred[0];
  Ji(2, 2) = -1.0;

  Eigen::Matrix4d Jp = Eigen::Matrix4d::Zero();
  Jp.block<2, 2>(0, 0) = Ri;
  Jp(2, 2) = 1.0;
  Jp(3, 3) = 1.0;

  const Eigen::Matrix4d W = sqrt_information(f.cov);
  Linearized out;
  out.r = W * r;
  out.blocks.push_back({f.pose_var, W * Ji});
  out.blocks.push_back({f.pallet_var, W * Jp});
  return out;
}

Linearized linearize_prior(const LinearPriorFactor& f,
                           const std::map<VarId, Variable>& vars,
                           bool at_estimates) {
  Eigen::VectorXd delta(f.sqrt_info.cols());
  int off = 0;
  std::vector<int> dims;
  for (size_t k = 0; k < f.vars.size(); ++k) {
    const Variable& v = vars.at(f.vars[k]);
    const Eigen::Vector4d x = value_of(v, at_estimates);
    delta[off + 0] = x[0] - f.anchors[k][0];
    delta[off + 1] = x[1] - f.anchors[k][1];
    delta[off + 2] = normalize_angle(x[2] - f.anchors[k][2]);
    if (v.dim() == 4) delta[off + 3] = x[3] - f.anchors[k][3];
    dims.push_back(v.dim());
    off += v.dim();
  }
  Linearized out;
  out.r = f.sqrt_info * delta + f.rhs;
  off = 0;
  for (size_t k = 0; k < f.vars.size(); ++k) {
    out.blocks.push_back({f.vars[k], f.sqrt_info.middleCols(off, dims[k])});
    off += dims[k];
  }
  return out;
}

double var_delta_norm(const Variable& v) {
  const double dt = std::abs(normalize_angle(v.estimate.theta - v.lin_pose.theta));
  return std::max({std::abs(v.estimate.x - v.lin_pose.x),
                   std::abs(v.estimate.y - v.lin_pose.y), dt,
                   std::abs(v.z - v.lin_z)});
}

}  // namespace

bool is_valid_covariance(const Eigen::MatrixXd& cov) {
  if (!cov.allFinite()) return false;
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  return llt.info() == Eigen::Success;
}

bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly) {
  bool inside = false;
  const size_t n = poly.size();
  for (size_t i = 0, j = n - 1; i < n; j = i++) {
    const bool cross_y = (poly[i].y > p.y) != (poly[j].y > p.y);
    if (cross_y) {
      const double t = (p.y - poly[i].y) / (poly[j].y - poly[i].y);
      if (p.x < poly[i].x + t * (poly[j].x - poly[i].x)) inside = !inside;
    }
  }
  return inside;
}

VarId FactorGraph::add_pose_variable(double timestamp, const Pose2D& init) {
  Variable v;
  v.id = next_id_++;
  v.type = VarType::VehiclePose;
  v.timestamp = timestamp;
  v.estimate = v.lin_pose = init;
  variables_[v.id] = v;
  last_pose_ = v.id;
  return v.id;
}

VarId FactorGraph::add_pallet_variable(double timestamp, const Pose2D& init,
                                       double z) {
  Variable v;
  v.id = next_id_++;
  v.type = VarType::PalletPose;
  v.timestamp = timestamp;
  v.estimate = v.lin_pose = init;
  v.z = v.lin_z = z;
  variables_[v.id] = v;
  return v.id;
}

VarId FactorGraph::add_odometry(VarId prev, double t_now, const Pose2D& delta,
                                const Eigen::Matrix3d& cov) {
  if (!variables_.count(prev))
    throw std::invalid_argument("add_odometry: unknown previous pose variable");
  if (!is_valid_covariance(cov))
    throw std::invalid_argument("add_odometry: covariance not SPD");
  const Pose2D init = variables_.at(prev).estimate.compose(delta);
  const VarId id = add_pose_variable(t_now, init);
  odom_.push_back({prev, id, delta, cov, t_now});
  return id;
}

void FactorGraph::add_gnss(VarId var, const Eigen::Vector3d& meas,
                           const Eigen::Matrix3d& cov, double timestamp) {
  if (!variables_.count(var))
    throw std::invalid_argument("add_gnss: unknown variable");
  if (!is_valid_covariance(cov))
    throw std::invalid_argument("add_gnss: covariance not SPD");
  gnss_.push_back({var, meas, cov, timestamp});
}

void FactorGraph::add_pallet_obs(VarId pose_var, VarId pallet_var,
                                 const Pose2D& rel, double z_rel,
                                 const Eigen::Matrix4d& cov, double timestamp) {
  if (!variables_.count(pose_var) || !variables_.count(pallet_var))
    throw std::invalid_argument("add_pallet_obs: unknown variable");
  if (!is_valid_covariance(cov))
    throw std::invalid_argument("add_pallet_obs: covariance not SPD");
  pallet_obs_.push_back({pose_var, pallet_var, rel, z_rel, cov, timestamp});
}

FactorGraph::LinearSystem FactorGraph::build_system(
    const std::vector<VarId>& vars, bool at_estimates) const {
  LinearSystem sys;
  int dim = 0;
  for (VarId id : vars) {
    sys.index[id] = dim;
    dim += variables_.at(id).dim();
  }
  sys.dim = dim;
  sys.H = Eigen::MatrixXd::Zero(dim, dim);
  sys.g = Eigen::VectorXd::Zero(dim);

  auto accumulate = [&](const Linearized& lin) {
    for (size_t a = 0; a < lin.blocks.size(); ++a) {
      const auto ita = sys.index.find(lin.blocks[a].var);
      if (ita == sys.index.end()) continue;
      sys.g.segment(ita->second, lin.blocks[a].J.cols()) +=
          lin.blocks[a].J.transpose() * lin.r;
      for (size_t b = 0; b < lin.blocks.size(); ++b) {
        const auto itb = sys.index.find(lin.blocks[b].var);
        if (itb == sys.index.end()) continue;
        sys.H.block(ita->second, itb->second, lin.blocks[a].J.cols(),
                    lin.blocks[b].J.cols()) +=
            lin.blocks[a].J.transpose() * lin.blocks[b].J;
      }
    }
  };

  for (const auto& f : odom_) {
    if (!sys.index.count(f.from) && !sys.index.count(f.to)) continue;
    accumulate(linearize_odometry(f, value_of(variables_.at(f.from), at_estimates),
                                  value_of(variables_.at(f.to), at_estimates)));
  }
  for (const auto& f : gnss_) {
    if (!sys.index.count(f.var)) continue;
    accumulate(linearize_gnss(f, value_of(variables_.at(f.var), at_estimates)));
  }
  for (const auto& f : pallet_obs_) {
    if (!sys.index.count(f.pose_var) && !sys.index.count(f.pallet_var)) continue;
    accumulate(linearize_pallet(f,
                                value_of(variables_.at(f.pose_var), at_estimates),
                                value_of(variables_.at(f.pallet_var), at_estimates)));
  }
  for (const auto& f : priors_) {
    bool touches = false;
    for (VarId v : f.vars) touches |= sys.index.count(v) > 0;
    if (touches) accumulate(linearize_prior(f, variables_, at_estimates));
  }
  return sys;
}

void FactorGraph::apply_delta(const Eigen::VectorXd& delta,
                              const std::map<VarId, int>& index,
                              bool to_lin_points) {
  for (const auto& [id, off] : index) {
    Variable& v = variables_.at(id);
    const Pose2D base = to_lin_points ? v.lin_pose : v.estimate;
    const double base_z = to_lin_points ? v.lin_z : v.z;
    v.estimate = Pose2D(base.x + delta[off], base.y + delta[off + 1],
                        base.theta + delta[off + 2]);
    if (v.dim() == 4) v.z = base_z + delta[off + 3];
  }
}

Estimates FactorGraph::optimize() {
  Estimates out;
  if (variables_.empty()) return out;

  std::vector<VarId> vars;
  for (const auto& [id, v] : variables_) vars.push_back(id);

  double lambda = 0.0;
  bool converged = false;
  for (int iter = 0; iter < params_.max_iterations && !converged; ++iter) {
    // Selective relinearization: only variables whose estimate moved beyond
    // the threshold from their linearization point get fresh Jacobians.
    for (VarId id : vars) {
      Variable& v = variables_.at(id);
      if (var_delta_norm(v) > params_.relin_threshold) {
        v.lin_pose = v.estimate;
        v.lin_z = v.z;
      }
    }

    LinearSystem sys = build_system(vars, /*at_estimates=*/false);
    Eigen::MatrixXd H = sys.H;
    if (lambda > 0.0) H.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    Eigen::VectorXd delta = ldlt.solve(-sys.g);
    if (ldlt.info() != Eigen::Success || !delta.allFinite() ||
        (sys.H * delta + sys.g).norm() > 1e-6 * (1.0 + sys.g.norm())) {
      // Indefinite or rank-deficient normal equations: Levenberg-Marquardt.
      lambda = std::max(lambda * 10.0, 1e-6);
      H = sys.H;
      H.diagonal().array() += lambda;
      delta = Eigen::LDLT<Eigen::MatrixXd>(H).solve(-sys.g);
      if (!delta.allFinite()) {
        out.converged = false;
        break;
      }
    }

    std::vector<double> prev;
    for (VarId id : vars) {
      const Variable& v = variables_.at(id);
      prev.insert(prev.end(), {v.estimate.x, v.estimate.y, v.estimate.theta, v.z});
    }
    apply_delta(delta, sys.index, /*to_lin_points=*/true);

    double change = 0.0;
    size_t k = 0;
    for (VarId id : vars) {
      const Variable& v = variables_.at(id);
      change = std::max({change, std::abs(v.estimate.x - prev[k]),
                         std::abs(v.estimate.y - prev[k + 1]),
                         std::abs(normalize_angle(v.estimate.theta - prev[k + 2])),
                         std::abs(v.z - prev[k + 3])});
      k += 4;
    }

    if (change < params_.convergence_tol) {
      // Verify stationarity with fresh Jacobians; stale linearization points
      // within the threshold may otherwise park us off the true MAP.
      LinearSystem exact = build_system(vars, /*at_estimates=*/true);
      if (exact.g.lpNorm<Eigen::Infinity>() < 1e-9 * (1.0 + lambda)) {
        converged = true;
      } else {
        for (VarId id : vars) {
          Variable& v = variables_.at(id);
          v.lin_pose = v.estimate;
          v.lin_z = v.z;
        }
        lambda = 0.0;
      }
    }
  }
  last_opt_converged_ = converged;
  out.converged = converged;

  for (const auto& [id, v] : variables_) {
    out.poses[id] = v.estimate;
    if (v.type == VarType::PalletPose) out.pallet_z[id] = v.z;
  }

  // Marginal covariances from the information matrix at the solution.
  LinearSystem sys = build_system(vars, /*at_estimates=*/true);
  Eigen::MatrixXd H = sys.H;
  H.diagonal().array() += 1e-12;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  if (ldlt.info() == Eigen::Success) {
    const Eigen::MatrixXd cov =
        ldlt.solve(Eigen::MatrixXd::Identity(sys.dim, sys.dim));
    for (const auto& [id, off] : sys.index)
      out.marginals[id] = cov.block<3, 3>(off, off);
  }
  return out;
}

AssociationResult FactorGraph::associate_detection(
    const Estimates& estimates, VarId pose_var, const PalletDetectionMeas& det,
    double timestamp) {
  AssociationResult res;
  if (!variables_.count(pose_var))
    throw std::invalid_argument("associate_detection: unknown pose variable");

  const Pose2D pose = estimates.poses.count(pose_var)
                          ? estimates.poses.at(pose_var)
                          : variables_.at(pose_var).estimate;
  const Pose2D world = pose.compose(det.rel);
  const double world_z = det.z_rel;

  Eigen::Matrix3d pose_cov = Eigen::Matrix3d::Zero();
  if (auto it = estimates.marginals.find(pose_var); it != estimates.marginals.end())
    pose_cov = it->second;

  // Jacobians of the world-frame detection w.r.t. pose and measurement.
  Eigen::Matrix3d Jp = Eigen::Matrix3d::Identity();
  const Eigen::Vector2d rel_rot =
      rot(pose.theta) * Eigen::Vector2d(det.rel.x, det.rel.y);
  Jp(0, 2) = -rel_rot[1];
  Jp(1, 2) = rel_rot[0];
  Eigen::Matrix3d Jm = Eigen::Matrix3d::Identity();
  Jm.block<2, 2>(0, 0) = rot(pose.theta);

  const Eigen::Matrix3d base_cov = Jp * pose_cov * Jp.transpose() +
                                   Jm * det.cov.block<3, 3>(0, 0) * Jm.transpose();

  double best_d2 = std::numeric_limits<double>::infinity();
  VarId best = -1;
  for (const auto& [var, track] : tracks_) {
    if (track.status == TrackStatus::Deleted) continue;
    const Variable& pv = variables_.at(var);
    if (std::abs(pv.z - world_z) > params_.gate_z) continue;
    Eigen::Matrix3d S = base_cov;
    if (auto it = estimates.marginals.find(var); it != estimates.marginals.end())
      S += it->second;
    Eigen::Vector3d r(world.x - pv.estimate.x, world.y - pv.estimate.y,
                      normalize_angle(world.theta - pv.estimate.theta));
    Eigen::LDLT<Eigen::Matrix3d> ldlt(S);
    if (ldlt.info() != Eigen::Success || S.determinant() < 1e-18) continue;
    const double d2 = r.dot(ldlt.solve(r));
    if (d2 < best_d2) {
      best_d2 = d2;
      best = var;
    }
  }

  if (best >= 0 && best_d2 <= params_.gate_d2) {
    add_pallet_obs(pose_var, best, det.rel, det.z_rel, det.cov, timestamp);
    PalletTrack& t = tracks_.at(best);
    t.last_seen = timestamp;
    t.associations += 1;
    t.misses_in_frustum = 0;
    if (t.status == TrackStatus::Candidate && t.associations >= params_.n_confirm)
      t.status = TrackStatus::Confirmed;
    res.kind = AssociationResult::Kind::Associated;
    res.pallet_var = best;
    res.d2 = best_d2;
    return res;
  }

  const VarId id = add_pallet_variable(timestamp, world, world_z);
  add_pallet_obs(pose_var, id, det.rel, det.z_rel, det.cov, timestamp);
  PalletTrack t;
  t.pallet_var = id;
  t.last_seen = timestamp;
  t.associations = 1;
  t.status = params_.n_confirm <= 1 ? TrackStatus::Confirmed : TrackStatus::Candidate;
  tracks_[id] = t;
  res.kind = AssociationResult::Kind::New;
  res.pallet_var = id;
  return res;
}

void FactorGraph::prune_and_cull(double now) {
  // Pose variables outside the smoothing window.
  std::vector<const Variable*> poses;
  for (const auto& [id, v] : variables_)
    if (v.type == VarType::VehiclePose) poses.push_back(&v);
  std::sort(poses.begin(), poses.end(), [](const Variable* a, const Variable* b) {
    return a->timestamp != b->timestamp ? a->timestamp < b->timestamp
                                        : a->id < b->id;
  });

  std::set<VarId> removed;
  const int excess = static_cast<int>(poses.size()) - params_.smoothing_window;
  for (int i = 0; i < excess; ++i) removed.insert(poses[i]->id);

  // Factors to eliminate: everything touching a removed pose, plus
  // measurements older than the culling age on retained variables.
  std::vector<size_t> odom_del, gnss_del, pallet_del, prior_del;
  for (size_t i = 0; i < odom_.size(); ++i)
    if (removed.count(odom_[i].from) || removed.count(odom_[i].to) ||
        odom_[i].timestamp < now - params_.cull_age)
      odom_del.push_back(i);
  for (size_t i = 0; i < gnss_.size(); ++i)
    if (removed.count(gnss_[i].var) || gnss_[i].timestamp < now - params_.cull_age)
      gnss_del.push_back(i);
  for (size_t i = 0; i < pallet_obs_.size(); ++i)
    if (removed.count(pallet_obs_[i].pose_var) ||
        pallet_obs_[i].timestamp < now - params_.cull_age)
      pallet_del.push_back(i);
  for (size_t i = 0; i < priors_.size(); ++i) {
    bool touches = false;
    for (VarId v : priors_[i].vars) touches |= removed.count(v) > 0;
    if (touches) prior_del.push_back(i);
  }

  if (odom_del.empty() && gnss_del.empty() && pallet_del.empty() &&
      prior_del.empty())
    return;

  optimize();  // anchor the replacement prior at the MAP

  // Variables involved in the eliminated subsystem.
  std::set<VarId> involved;
  for (size_t i : odom_del) {
    involved.insert(odom_[i].from);
    involved.insert(odom_[i].to);
  }
  for (size_t i : gnss_del) involved.insert(gnss_[i].var);
  for (size_t i : pallet_del) {
    involved.insert(pallet_obs_[i].pose_var);
    involved.insert(pallet_obs_[i].pallet_var);
  }
  for (size_t i : prior_del)
    for (VarId v : priors_[i].vars) involved.insert(v);

  std::vector<VarId> marg, keep;
  for (VarId v : involved)
    (removed.count(v) ? marg : keep).push_back(v);

  // Linearize only the eliminated factors at the current estimates.
  std::map<VarId, int> index;
  int dim = 0;
  auto add_index = [&](VarId v) {
    if (!index.count(v)) {
      index[v] = dim;
      dim += variables_.at(v).dim();
    }
  };
  for (VarId v : marg) add_index(v);
  int marg_dim = dim;
  for (VarId v : keep) add_index(v);

  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(dim);
  auto accumulate = [&](const Linearized& lin) {
    for (size_t a = 0; a < lin.blocks.size(); ++a) {
      const int ia = index.at(lin.blocks[a].var);
      g.segment(ia, lin.blocks[a].J.cols()) += lin.blocks[a].J.transpose() * lin.r;
      for (size_t b = 0; b < lin.blocks.size(); ++b) {
        const int ib = index.at(lin.blocks[b].var);
        H.block(ia, ib, lin.blocks[a].J.cols(), lin.blocks[b].J.cols()) +=
            lin.blocks[a].J.transpose() * lin.blocks[b].J;
      }
    }
  };
  for (size_t i : odom_del)
    accumulate(linearize_odometry(odom_[i],
                                  value_of(variables_.at(odom_[i].from), true),
                                  value_of(variables_.at(odom_[i].to), true)));
  for (size_t i : gnss_del)
    accumulate(linearize_gnss(gnss_[i], value_of(variables_.at(gnss_[i].var), true)));
  for (size_t i : pallet_del)
    accumulate(linearize_pallet(
        pallet_obs_[i], value_of(variables_.at(pallet_obs_[i].pose_var), true),
        value_of(variables_.at(pallet_obs_[i].pallet_var), true)));
  for (size_t i : prior_del)
    accumulate(linearize_prior(priors_[i], variables_, true));

  const int keep_dim = dim - marg_dim;
  Eigen::MatrixXd S;
  Eigen::VectorXd gs;
  if (marg_dim > 0) {
    const Eigen::MatrixXd Hmm = H.topLeftCorner(marg_dim, marg_dim) +
                                1e-12 * Eigen::MatrixXd::Identity(marg_dim, marg_dim);
    const Eigen::MatrixXd Hbm = H.bottomLeftCorner(keep_dim, marg_dim);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(Hmm);
    const Eigen::MatrixXd HmmInvHmb = ldlt.solve(Hbm.transpose());
    S = H.bottomRightCorner(keep_dim, keep_dim) - Hbm * HmmInvHmb;
    gs = g.tail(keep_dim) - HmmInvHmb.transpose() * g.head(marg_dim);
  } else {
    S = H;
    gs = g;
  }

  if (keep_dim > 0 && S.lpNorm<Eigen::Infinity>() > 1e-12) {
    // Square root of the (possibly rank-deficient) marginal information.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (S + S.transpose()));
    std::vector<int> kept_rows;
    const double ev_max = es.eigenvalues().cwiseMax(0.0).maxCoeff();
    for (int i = 0; i < keep_dim; ++i)
      if (es.eigenvalues()[i] > std::max(1e-12, 1e-12 * ev_max))
        kept_rows.push_back(i);
    if (!kept_rows.empty()) {
      LinearPriorFactor prior;
      prior.timestamp = now;
      Eigen::MatrixXd R(kept_rows.size(), keep_dim);
      Eigen::VectorXd rhs(kept_rows.size());
      for (size_t r = 0; r < kept_rows.size(); ++r) {
        const int i = kept_rows[r];
        const double sq = std::sqrt(es.eigenvalues()[i]);
        R.row(r) = sq * es.eigenvectors().col(i).transpose();
        rhs[r] = es.eigenvectors().col(i).dot(gs) / sq;
      }
      prior.sqrt_info = R;
      prior.rhs = rhs;
      // Keep ordering consistent with the index map offsets.
      std::vector<std::pair<int, VarId>> order;
      for (VarId v : keep) order.push_back({index.at(v), v});
      std::sort(order.begin(), order.end());
      for (const auto& [off, v] : order) {
        prior.vars.push_back(v);
        prior.anchors.push_back(value_of(variables_.at(v), true));
      }
      priors_.push_back(std::move(prior));
    }
  }

  auto erase_indices = [](auto& vec, const std::vector<size_t>& idx) {
    for (auto it = idx.rbegin(); it != idx.rend(); ++it)
      vec.erase(vec.begin() + static_cast<long>(*it));
  };
  erase_indices(odom_, odom_del);
  erase_indices(gnss_, gnss_del);
  erase_indices(pallet_obs_, pallet_del);
  erase_indices(priors_, prior_del);
  for (VarId v : removed) variables_.erase(v);
}

void FactorGraph::bookkeeping(const Estimates& estimates,
                              const Pose2D& vehicle_pose,
                              const std::vector<Vec2>& frustum,
                              const std::vector<VarId>& associated_this_frame,
                              double now) {
  const std::set<VarId> assoc(associated_this_frame.begin(),
                              associated_this_frame.end());
  for (auto& [var, track] : tracks_) {
    if (track.status == TrackStatus::Deleted) continue;
    if (assoc.count(var)) {
      track.misses_in_frustum = 0;
      track.last_seen = now;
      if (track.status == TrackStatus::Candidate &&
          track.associations >= params_.n_confirm)
        track.status = TrackStatus::Confirmed;
      continue;
    }
    const Pose2D est = estimates.poses.count(var) ? estimates.poses.at(var)
                                                  : variables_.at(var).estimate;
    const Vec2 local = vehicle_pose.inverse_transform(est.position());
    if (point_in_polygon(local, frustum)) {
      if (++track.misses_in_frustum >= params_.n_miss)
        track.status = TrackStatus::Deleted;
    }
    // Outside the frustum the track is untouched: object permanence.
  }
}

std::vector<VarId> FactorGraph::confirmed_pallets() const {
  std::vector<VarId> out;
  for (const auto& [var, t] : tracks_)
    if (t.status == TrackStatus::Confirmed) out.push_back(var);
  return out;
}

int FactorGraph::pose_count() const {
  int n = 0;
  for (const auto& [id, v] : variables_)
    if (v.type == VarType::VehiclePose) ++n;
  return n;
}

std::string FactorGraph::dump() const {
  std::ostringstream os;
  os << "variables " << variables_.size() << "\n";
  for (const auto& [id, v] : variables_) {
    os << "  " << (v.type == VarType::VehiclePose ? "pose" : "pallet") << " "
       << id << " t=" << v.timestamp << " (" << v.estimate.x << ", "
       << v.estimate.y << ", " << v.estimate.theta;
    if (v.dim() == 4) os << ", z=" << v.z;
    os << ")\n";
  }
  os << "odometry " << odom_.size() << "\n";
  for (const auto& f : odom_)
    os << "  " << f.from << " -> " << f.to << " t=" << f.timestamp << "\n";
  os << "gnss " << gnss_.size() << "\n";
  for (const auto& f : gnss_) os << "  " << f.var << " t=" << f.timestamp << "\n";
  os << "pallet_obs " << pallet_obs_.size() << "\n";
  for (const auto& f : pallet_obs_)
    os << "  " << f.pose_var << " -> " << f.pallet_var << " t=" << f.timestamp
       << "\n";
  os << "priors " << priors_.size() << "\n";
  return os.str();
}

bool FactorGraph::check_structure() const {
  for (const auto& f : odom_)
    if (!variables_.count(f.from) || !variables_.count(f.to)) return false;
  for (const auto& f : gnss_)
    if (!variables_.count(f.var)) return false;
  for (const auto& f : pallet_obs_)
    if (!variables_.count(f.pose_var) || !variables_.count(f.pallet_var))
      return false;
  for (const auto& f : priors_)
    for (VarId v : f.vars)
      if (!variables_.count(v)) return false;

  // Every pallet variable must be constrained by an observation or a prior.
  for (const auto& [id, v] : variables_) {
    if (v.type != VarType::PalletPose) continue;
    bool constrained = false;
    for (const auto& f : pallet_obs_) constrained |= f.pallet_var == id;
    for (const auto& f : priors_)
      for (VarId pv : f.vars) constrained |= pv == id;
    if (!constrained) return false;
  }

  // Connectivity over the factor adjacency.
  if (variables_.empty()) return true;
  std::map<VarId, VarId> parent;
  for (const auto& [id, v] : variables_) parent[id] = id;
  std::function<VarId(VarId)> find = [&](VarId a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  auto unite = [&](VarId a, VarId b) { parent[find(a)] = find(b); };
  for (const auto& f : odom_) unite(f.from, f.to);
  for (const auto& f : pallet_obs_) unite(f.pose_var, f.pallet_var);
  for (const auto& f : priors_)
    for (size_t i = 1; i < f.vars.size(); ++i) unite(f.vars[0], f.vars[i]);
  const VarId root = find(variables_.begin()->first);
  for (const auto& [id, v] : variables_)
    if (find(id) != root) return false;
  return true;
}

}  // namespace forksim::estimation
