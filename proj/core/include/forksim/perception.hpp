#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "forksim/estimation.hpp"
#include "forksim/geometry.hpp"
#include "forksim/mapping.hpp"
#include "forksim/planner.hpp"
#include "forksim/vehicle_model.hpp"

namespace forksim::perception {

using mapping::Point3;

// Reference frame spanned by the truck's loading edge and its vertical front
// face. The normal points outward, toward the approaching vehicle.
struct LoadingEdgeFrame {
  Point3 origin;
  Point3 direction;  // unit, along the edge
  Point3 normal;     // unit, near horizontal
  double edge_length = 0.0;
};

enum class EdgeStatus { Ok, LowConfidence, NoEdgeFound };

struct EdgeResult {
  EdgeStatus status = EdgeStatus::NoEdgeFound;
  LoadingEdgeFrame frame;
  double inlier_ratio = 0.0;
  int candidate_count = 0;
};

struct EdgeParams {
  double outlier_radius = 0.25;
  int outlier_min_neighbors = 4;
  double z_min = 0.2;
  double z_max = 2.5;
  double neighborhood_radius = 0.25;
  double vertical_max_angle = 20.0 * kPi / 180.0;    // deck-surface normals
  double horizontal_max_angle = 20.0 * kPi / 180.0;  // front-face normals
  int ransac_iterations = 200;
  double ransac_inlier_band = 0.03;
  int n_ransac_min = 10;
  double min_inlier_ratio = 0.5;
  std::uint64_t seed = 1;
};

// Multi-step loading edge detector: radius outlier removal, height band
// filter, edge candidate classification from mixed-normal neighborhoods,
// RANSAC line fit, end detection from the front face, frame assembly.
// The cloud is given in the sensor frame; sensor_tf places it in the
// globally planar world frame.
EdgeResult detect_loading_edge(const std::vector<Point3>& cloud,
                               const Pose2D& sensor_tf,
                               const EdgeParams& params = {});

struct Slot {
  Pose2D pose;  // heading faces the approaching vehicle
  double z = 0.0;
  bool occupied = false;
  int index = 0;
};

struct SlotOffset {
  double along = 0.0;  // meters from the frame origin, along the edge
  double depth = 0.0;  // meters into the platform, behind the edge
};

// Places target slots in the edge frame. Offsets beyond the edge length are
// omitted.
std::vector<Slot> slots_from_pattern(const LoadingEdgeFrame& frame,
                                     const std::vector<SlotOffset>& pattern);

struct ObstacleCluster {
  Point3 centroid;
  Point3 min_corner;
  Point3 max_corner;
  int point_count = 0;
};

struct ClusterParams {
  double eps = 0.5;
  int min_pts = 5;
  double band_low = 0.3;   // meters above the ground plane
  double band_high = 2.2;
};

// DBSCAN over points within the obstacle height band above the ground plane.
std::vector<ObstacleCluster> cluster_obstacles(const std::vector<Point3>& cloud,
                                               double ground_z,
                                               const ClusterParams& params = {});

struct ObstacleTrack {
  int id = 0;
  Eigen::Vector4d state = Eigen::Vector4d::Zero();  // x, y, vx, vy
  Eigen::Matrix4d cov = Eigen::Matrix4d::Identity();
  Point3 extent;  // axis-aligned half extents, z carries obstacle height
  int age = 0;
  int misses = 0;
  int hits = 0;
  Eigen::Vector2d position() const { return state.head<2>(); }
  Eigen::Vector2d velocity() const { return state.tail<2>(); }
};

struct TrackerParams {
  double accel_noise = 0.5;   // m/s^2, process noise scale
  double meas_sigma = 0.10;   // m, centroid measurement noise
  double gate_d2 = 5.991;     // chi-square(2), 95%
  int n_miss = 10;
};

// One constant-velocity filter step: predict, gate, update, spawn, retire.
std::vector<ObstacleTrack> track_obstacles(
    const std::vector<ObstacleTrack>& tracks,
    const std::vector<ObstacleCluster>& clusters, double dt,
    const TrackerParams& params = {});

struct CollisionWarning {
  int track_id = 0;
  double time_to_conflict = 0.0;
  double conflict_distance = 0.0;  // along the path, meters
  Eigen::Vector2d location = Eigen::Vector2d::Zero();
  bool within_stopping_envelope = false;
};

struct CollisionParams {
  double horizon = 5.0;     // seconds
  double clearance = 0.5;   // buffer around the footprint, meters
  double time_step = 0.1;
};

// Sweeps the clearance-buffered footprint along the path at the commanded
// speed and intersects it with constant-velocity track predictions. Warnings
// are flagged when the conflict falls inside the stopping envelope
// v^2 / (2 a) plus the safety margin.
std::vector<CollisionWarning> predict_collision(
    const std::vector<ObstacleTrack>& tracks, const planning::Path& path,
    const vehicle::VehicleParams& vehicle, double vehicle_speed, double decel,
    double safety_margin, const CollisionParams& params = {});

struct PalletTruth {
  int id = 0;
  Pose2D pose;  // origin at the approach-side front center
  double z = 0.0;
};

struct DetectionNoise {
  bool enabled = true;
  double sigma_x_quad = 0.005;  // depth sigma per squared meter of distance
  double sigma_y0 = 0.01;
  double sigma_y_psi = 0.08;    // per radian of relative yaw
  double sigma_psi0 = 0.01;
  double sigma_psi_psi = 0.15;
  double sigma_z = 0.01;
  double max_range = 8.0;
  double max_view_angle = 0.7;       // radians, half field of view
  double psi_reliable = 15.0 * kPi / 180.0;
  double miss_per_psi = 1.5;         // miss probability per radian past band
};

// Parametric stand-in for a learned pallet detector. Depth error grows
// quadratically with distance and redistributes between x and y with the
// viewing direction; lateral and yaw errors grow with relative yaw.
std::vector<estimation::PalletDetectionMeas> synth_pallet_detect(
    const std::vector<PalletTruth>& pallets, const Pose2D& camera_pose,
    const DetectionNoise& noise, std::mt19937_64& rng);

}  // namespace forksim::perception
