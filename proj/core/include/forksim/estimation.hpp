#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "forksim/geometry.hpp"

namespace forksim::estimation {

using VarId = int;

enum class VarType { VehiclePose, PalletPose };

// Joint vehicle/pallet state over SE(2); pallets carry an extra scalar z.
struct Variable {
  VarId id = -1;
  VarType type = VarType::VehiclePose;
  double timestamp = 0.0;
  Pose2D estimate;
  double z = 0.0;
  Pose2D lin_pose;  // linearization point
  double lin_z = 0.0;

  int dim() const { return type == VarType::PalletPose ? 4 : 3; }
};

struct OdometryFactor {
  VarId from = -1, to = -1;
  Pose2D delta;  // pose of `to` in `from` frame
  Eigen::Matrix3d cov;
  double timestamp = 0.0;
};

struct GnssFactor {
  VarId var = -1;
  Eigen::Vector3d meas;  // x, y, heading
  Eigen::Matrix3d cov;
  double timestamp = 0.0;
};

struct PalletObsFactor {
  VarId pose_var = -1, pallet_var = -1;
  Pose2D rel;          // pallet pose in vehicle frame
  double z_rel = 0.0;  // pallet height above vehicle ground plane
  Eigen::Matrix4d cov;
  double timestamp = 0.0;
};

// Gaussian prior produced by marginalization / measurement culling. Residual
// is sqrt_info * stack(x_i (-) anchor_i) + rhs over the listed variables.
struct LinearPriorFactor {
  std::vector<VarId> vars;
  std::vector<Eigen::Vector4d> anchors;  // x, y, theta, z (z unused for poses)
  Eigen::MatrixXd sqrt_info;
  Eigen::VectorXd rhs;
  double timestamp = 0.0;
};

struct Estimates {
  std::map<VarId, Pose2D> poses;
  std::map<VarId, double> pallet_z;
  std::map<VarId, Eigen::Matrix3d> marginals;  // x/y/theta blocks
  bool converged = true;
};

enum class TrackStatus { Candidate, Confirmed, Deleted };

struct PalletTrack {
  VarId pallet_var = -1;
  double last_seen = 0.0;
  int misses_in_frustum = 0;
  int associations = 0;
  TrackStatus status = TrackStatus::Candidate;
};

struct AssociationResult {
  enum class Kind { Associated, New, Rejected } kind = Kind::Rejected;
  VarId pallet_var = -1;
  double d2 = 0.0;
};

struct PalletDetectionMeas {
  Pose2D rel;
  double z_rel = 0.0;
  Eigen::Matrix4d cov;
};

struct GraphParams {
  double relin_threshold = 0.01;
  int smoothing_window = 20;      // pose variables kept after pruning
  double cull_age = 5.0;          // measurement age before composition [s]
  double gate_d2 = 7.815;         // chi-square(3), 95%
  double gate_z = 0.5;            // hard z separation cut [m]
  int n_confirm = 3;
  int n_miss = 10;
  int max_iterations = 50;
  double convergence_tol = 1e-10;
};

class FactorGraph {
 public:
  explicit FactorGraph(GraphParams params = {}) : params_(params) {}

  VarId add_pose_variable(double timestamp, const Pose2D& init);
  VarId add_pallet_variable(double timestamp, const Pose2D& init, double z);

  // Appends an odometry factor from t_prev's variable and creates the new
  // pose variable initialized by composition.
  VarId add_odometry(VarId prev, double t_now, const Pose2D& delta,
                     const Eigen::Matrix3d& cov);
  void add_gnss(VarId var, const Eigen::Vector3d& meas,
                const Eigen::Matrix3d& cov, double timestamp);
  void add_pallet_obs(VarId pose_var, VarId pallet_var, const Pose2D& rel,
                      double z_rel, const Eigen::Matrix4d& cov,
                      double timestamp);

  // Mahalanobis-gated association against active tracks; creates the pallet
  // variable and observation factor as needed and updates the track table.
  AssociationResult associate_detection(const Estimates& estimates,
                                        VarId pose_var,
                                        const PalletDetectionMeas& det,
                                        double timestamp);

  // Gauss-Newton with selective relinearization and LM fallback.
  Estimates optimize();

  // Collapses pose variables outside the smoothing window into a prior on
  // the boundary and composes measurements older than cull_age.
  void prune_and_cull(double now);

  // Track promotion / in-frustum miss counting / object permanence.
  // Frustum is a polygon in the vehicle frame of `vehicle_pose`;
  // `associated_this_frame` lists pallet vars matched by the current frame.
  void bookkeeping(const Estimates& estimates, const Pose2D& vehicle_pose,
                   const std::vector<Vec2>& frustum,
                   const std::vector<VarId>& associated_this_frame,
                   double now);

  const std::map<VarId, Variable>& variables() const { return variables_; }
  const std::vector<OdometryFactor>& odometry_factors() const { return odom_; }
  const std::vector<GnssFactor>& gnss_factors() const { return gnss_; }
  const std::vector<PalletObsFactor>& pallet_factors() const { return pallet_obs_; }
  const std::vector<LinearPriorFactor>& prior_factors() const { return priors_; }
  const std::map<VarId, PalletTrack>& tracks() const { return tracks_; }
  const GraphParams& params() const { return params_; }

  std::vector<VarId> confirmed_pallets() const;
  int pose_count() const;
  VarId last_pose() const { return last_pose_; }

  // Diagnostic text listing of variables and factors with timestamps.
  std::string dump() const;

  bool check_structure() const;  // bipartite + connectivity invariant

 private:
  friend class BatchOracleAccess;

  struct LinearSystem {
    Eigen::MatrixXd H;
    Eigen::VectorXd g;  // gradient: J^T r
    std::map<VarId, int> index;
    int dim = 0;
  };

  LinearSystem build_system(const std::vector<VarId>& vars,
                            bool at_estimates) const;
  void apply_delta(const Eigen::VectorXd& delta,
                   const std::map<VarId, int>& index, bool to_lin_points);

  GraphParams params_;
  std::map<VarId, Variable> variables_;
  std::vector<OdometryFactor> odom_;
  std::vector<GnssFactor> gnss_;
  std::vector<PalletObsFactor> pallet_obs_;
  std::vector<LinearPriorFactor> priors_;
  std::map<VarId, PalletTrack> tracks_;
  VarId next_id_ = 0;
  VarId last_pose_ = -1;
  bool last_opt_converged_ = true;
};

// Checks a covariance for symmetry and positive definiteness.
bool is_valid_covariance(const Eigen::MatrixXd& cov);

bool point_in_polygon(const Vec2& p, const std::vector<Vec2>& poly);

}  // namespace forksim::estimation
