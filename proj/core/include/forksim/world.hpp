#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "forksim/control.hpp"
#include "forksim/mapping.hpp"
#include "forksim/perception.hpp"
#include "forksim/vehicle_model.hpp"

namespace forksim::world {

enum class LoadKind { None, Box };

struct PalletGroundTruth {
  int id = 0;
  Pose2D pose;        // origin at the front-center of the approach face,
                      // +x pointing out along the insertion direction
  double z = 0.0;     // bottom face height
  double mass_kg = 0.0;
  LoadKind load_kind = LoadKind::None;
  bool carried = false;
};

struct TruckGroundTruth {
  bool present = false;
  Pose2D pose;               // deck center, +x points out of the loading edge
  double deck_height = 1.1;  // top surface [m]
  double deck_length = 6.0;  // along +x
  double deck_width = 2.4;
  double underbody_clearance = 0.35;  // front face starts here
};

struct Obstacle {
  int id = 0;
  Vec2 center;
  Vec2 half_extents{0.3, 0.3};
  double height = 1.7;
  Vec2 velocity;  // constant, world frame
};

// Height field; absent grid means flat ground at base_z.
struct Terrain {
  double base_z = 0.0;
  double resolution = 0.5;
  Vec2 origin;            // grid cell (0,0) corner
  int nx = 0, ny = 0;
  std::vector<double> heights;  // row-major, ny rows of nx

  double height_at(double x, double y) const;
};

struct NoiseProfile {
  double odom_v_sigma = 0.0;
  double odom_gamma_sigma = 0.0;
  double gnss_xy_sigma = 0.0;
  double gnss_heading_sigma = 0.0;
  std::vector<std::pair<double, double>> gnss_dropout_windows;
  double pressure_sigma = 0.0;
  double lidar_range_sigma = 0.0;
  perception::DetectionNoise detection;

  bool gnss_available(double t) const;
  static NoiseProfile none() { return {}; }
};

struct LidarConfig {
  Pose2D mount;          // relative to the carrying axle, planar part
  double mount_z = 1.9;
  double fov = 3.1;      // horizontal field of view [rad], centered on mount x
  double azimuth_step = 0.35 * kPi / 180.0;
  std::vector<double> elevations =  // channel pitch angles [rad]
      {-0.44, -0.38, -0.32, -0.26, -0.21, -0.16, -0.11, -0.07,
       -0.03, 0.0, 0.03, 0.06, 0.09, 0.12, 0.16, 0.20};
  double max_range = 25.0;
};

struct WorldState {
  vehicle::VehicleState vehicle;
  std::vector<PalletGroundTruth> pallets;
  TruckGroundTruth truck;
  std::vector<Obstacle> obstacles;
  Terrain terrain;
  std::uint64_t rng_seed = 1;
  double time = 0.0;
  int carried_pallet = -1;    // index into pallets, -1 when unloaded
};

struct Odometry {
  double v = 0.0;
  double gamma = 0.0;
  double gamma_rate = 0.0;
};

struct GnssFix {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
};

struct JointFeedback {
  double gamma = 0.0;
  double beta = 0.0;
  double lift = 0.0;
  double shift = 0.0;
};

struct SensorBundle {
  double time = 0.0;
  Odometry odometry;
  std::optional<GnssFix> gnss;
  std::vector<mapping::Point3> front_cloud;  // sensor frame
  std::vector<mapping::Point3> rear_cloud;
  bool clouds_fresh = false;  // clouds are sampled at the lidar period
  double lift_pressure = 0.0;
  JointFeedback joints;
};

struct WorldParams {
  vehicle::VehicleParams vehicle;
  vehicle::ActuatorModel drive{vehicle::ActuatorKind::FirstOrderLag, 0.0,
                               1.67, 0.4};
  vehicle::ActuatorModel steer{vehicle::ActuatorKind::LinearRate, 0.0, 0.5};
  vehicle::ActuatorModel lift{vehicle::ActuatorKind::FirstOrderLag, 0.0, 0.25,
                              0.5};
  vehicle::ActuatorModel shift{vehicle::ActuatorKind::FirstOrderLag, 0.0,
                               0.10, 0.3};
  vehicle::ActuatorModel tilt{vehicle::ActuatorKind::FirstOrderLag, 0.0, 0.15,
                              0.3};
  double p_base = 30.0;     // unloaded lifting pressure
  double p_per_kg = 0.05;   // pressure per carried kilogram
  double p_contact = 15.0;  // residual pressure with support transferred
  double pallet_width = 1.2;
  double pallet_depth = 1.2;   // along the insertion direction
  double pocket_tolerance = 0.10;  // vertical fork clearance inside pockets
  double attach_insertion = 0.95;  // fraction of fork length
  double lidar_period = 0.1;
  LidarConfig front_lidar{Pose2D{0.3, 0.0, 0.0}};
  LidarConfig rear_lidar{Pose2D{-0.3, 0.0, kPi}};
};

// Fraction-of-fork-length insertion depth of the fork tips in a pallet's
// pockets, 0 when the forks are outside the pocket mouth.
double insertion_depth(const vehicle::VehicleState& state,
                       const PalletGroundTruth& pallet,
                       const WorldParams& params);

// Height of the highest support surface under the given point (terrain,
// truck deck, resting pallet tops, obstacle tops below z_probe).
double support_height(const WorldState& world, const WorldParams& params,
                      double x, double y);

// Single-owner stepped simulation. All randomness comes from one seeded
// generator, so equal (seed, command) streams reproduce bit-identical
// sensor outputs.
class World {
 public:
  World(WorldState initial, WorldParams params, NoiseProfile noise);

  // Advances the plant by dt under normalized commands (clamped to [-1,1];
  // out-of-range inputs are counted) and samples all sensors.
  SensorBundle step(const control::Commands& commands, double dt);

  // Ray-cast point cloud in the sensor frame.
  std::vector<mapping::Point3> lidar_sample(const LidarConfig& cfg,
                                            bool rear_mounted,
                                            double max_range);

  const WorldState& state() const { return state_; }
  const WorldParams& params() const { return params_; }
  int clamp_events() const { return clamp_events_; }
  double vehicle_z() const;

  // Pallet ground truths in the form the synthetic detector consumes.
  std::vector<perception::PalletTruth> pallet_truths() const;

 private:
  void update_carry();
  double pressure_sample();

  WorldState state_;
  WorldParams params_;
  NoiseProfile noise_;
  std::mt19937_64 rng_;
  int clamp_events_ = 0;
  bool fork_in_contact_ = false;
  int recently_placed_ = -1;  // no re-attach until the forks withdraw
  double last_gamma_rate_ = 0.0;
  double lidar_elapsed_ = 0.0;
  Pose2D carry_offset_;      // pallet pose in the fork tip frame
  double carry_z_offset_ = 0.0;
};

}  // namespace forksim::world
