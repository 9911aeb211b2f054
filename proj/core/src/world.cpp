#include "forksim/world.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace forksim::world {

double Terrain::height_at(double x, double y) const {
  if (nx < 2 || ny < 2 || heights.empty()) return base_z;
  const double gx = std::clamp((x - origin.x) / resolution, 0.0, nx - 1.001);
  const double gy = std::clamp((y - origin.y) / resolution, 0.0, ny - 1.001);
  const int ix = static_cast<int>(gx);
  const int iy = static_cast<int>(gy);
  const double fx = gx - ix, fy = gy - iy;
  const auto h = [&](int i, int j) { return heights[j * nx + i]; };
  const double h0 = h(ix, iy) * (1 - fx) + h(ix + 1, iy) * fx;
  const double h1 = h(ix, iy + 1) * (1 - fx) + h(ix + 1, iy + 1) * fx;
  return base_z + h0 * (1 - fy) + h1 * fy;
}

bool NoiseProfile::gnss_available(double t) const {
  for (const auto& [t0, t1] : gnss_dropout_windows)
    if (t >= t0 && t <= t1) return false;
  return true;
}

double insertion_depth(const vehicle::VehicleState& state,
                       const PalletGroundTruth& pallet,
                       const WorldParams& params) {
  const auto tip = vehicle::fork_tip_pose(state, params.vehicle);
  const Vec2 tp = pallet.pose.inverse_transform(tip.pose.position());
  if (std::abs(tp.y) > params.pallet_width / 2.0) return 0.0;
  // Forks travel against the pallet's insertion axis.
  const double align =
      normalize_angle(tip.pose.theta - pallet.pose.theta - kPi);
  if (std::abs(align) > 0.6) return 0.0;
  // The pallet origin sits at the front face, so the tip's pallet-frame x
  // is directly the (negated) penetration.
  const double depth = std::clamp(-tp.x, 0.0, params.vehicle.fork_length);
  return depth / params.vehicle.fork_length;
}

double support_height(const WorldState& world, const WorldParams& params,
                      double x, double y) {
  double s = world.terrain.height_at(x, y);
  if (world.truck.present) {
    const Vec2 p = world.truck.pose.inverse_transform({x, y});
    if (std::abs(p.x) <= world.truck.deck_length / 2.0 &&
        std::abs(p.y) <= world.truck.deck_width / 2.0)
      s = std::max(s, world.truck.deck_height);
  }
  for (size_t i = 0; i < world.pallets.size(); ++i) {
    if (static_cast<int>(i) == world.carried_pallet) continue;
    const auto& pal = world.pallets[i];
    const Vec2 p = pal.pose.inverse_transform({x, y});
    if (p.x >= -params.pallet_depth && p.x <= 0.0 &&
        std::abs(p.y) <= params.pallet_width / 2.0)
      s = std::max(s, pal.z + params.vehicle.pallet_height);
  }
  for (const auto& ob : world.obstacles) {
    if (std::abs(x - ob.center.x) <= ob.half_extents.x &&
        std::abs(y - ob.center.y) <= ob.half_extents.y)
      s = std::max(s, world.terrain.height_at(x, y) + ob.height);
  }
  return s;
}

World::World(WorldState initial, WorldParams params, NoiseProfile noise)
    : state_(std::move(initial)),
      params_(std::move(params)),
      noise_(noise),
      rng_(state_.rng_seed) {
  int carried = -1;
  for (size_t i = 0; i < state_.pallets.size(); ++i) {
    if (!state_.pallets[i].carried) continue;
    if (carried >= 0)
      throw std::invalid_argument("world: more than one carried pallet");
    carried = static_cast<int>(i);
  }
  state_.carried_pallet = carried;
  if (carried >= 0) {
    const auto tip = vehicle::fork_tip_pose(state_.vehicle, params_.vehicle);
    carry_offset_ = tip.pose.between(state_.pallets[carried].pose);
    carry_z_offset_ =
        state_.pallets[carried].z - (vehicle_z() + state_.vehicle.lift);
  }
  // First bundle carries fresh clouds.
  lidar_elapsed_ = params_.lidar_period;
}

double World::vehicle_z() const {
  return state_.terrain.height_at(state_.vehicle.front.x,
                                  state_.vehicle.front.y);
}

namespace {

double clamp_cmd(double u, int& events) {
  if (u < -1.0 || u > 1.0) ++events;
  return std::clamp(u, -1.0, 1.0);
}

}  // namespace

void World::update_carry() {
  auto& veh = state_.vehicle;
  const double fork_z = vehicle_z() + veh.lift;
  if (state_.carried_pallet >= 0) {
    auto& pal = state_.pallets[state_.carried_pallet];
    const auto tip = vehicle::fork_tip_pose(veh, params_.vehicle);
    pal.pose = tip.pose.compose(carry_offset_);
    pal.z = fork_z + carry_z_offset_;
    return;
  }
  if (recently_placed_ >= 0 &&
      insertion_depth(veh, state_.pallets[recently_placed_], params_) < 0.5)
    recently_placed_ = -1;
  for (size_t i = 0; i < state_.pallets.size(); ++i) {
    auto& pal = state_.pallets[i];
    if (static_cast<int>(i) == recently_placed_) continue;
    if (insertion_depth(veh, pal, params_) < params_.attach_insertion)
      continue;
    if (fork_z < pal.z + params_.pocket_tolerance - 1e-9 ||
        fork_z > pal.z + params_.vehicle.pallet_height)
      continue;
    pal.carried = true;
    state_.carried_pallet = static_cast<int>(i);
    const auto tip = vehicle::fork_tip_pose(veh, params_.vehicle);
    carry_offset_ = tip.pose.between(pal.pose);
    carry_z_offset_ = pal.z - fork_z;
    return;
  }
}

double World::pressure_sample() {
  double p;
  if (fork_in_contact_) {
    p = params_.p_contact;
  } else if (state_.carried_pallet >= 0) {
    p = params_.p_base +
        params_.p_per_kg * state_.pallets[state_.carried_pallet].mass_kg;
  } else {
    p = params_.p_base;
  }
  if (noise_.pressure_sigma > 0.0) {
    std::normal_distribution<double> n(0.0, noise_.pressure_sigma);
    p += n(rng_);
  }
  return p;
}

SensorBundle World::step(const control::Commands& commands, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("world_step: dt must be > 0");
  const double u_v = clamp_cmd(commands.u_v, clamp_events_);
  const double u_gamma = clamp_cmd(commands.u_gamma, clamp_events_);
  const double u_lift = clamp_cmd(commands.u_lift, clamp_events_);
  const double u_shift = clamp_cmd(commands.u_shift, clamp_events_);
  const double u_tilt = clamp_cmd(commands.u_tilt, clamp_events_);

  auto& veh = state_.vehicle;
  const double v = params_.drive.step(u_v, dt);
  // Effective joint rate: the articulation hard stop absorbs whatever the
  // actuator commands past it, and the heading equation must see zero there.
  const double raw_rate = params_.steer.step(u_gamma, dt);
  const double gamma_next =
      std::clamp(veh.gamma + raw_rate * dt, -params_.vehicle.gamma_max,
                 params_.vehicle.gamma_max);
  const double gamma_rate = (gamma_next - veh.gamma) / dt;
  veh = vehicle::kinematics_step(veh, v, gamma_rate, dt, params_.vehicle);
  veh.v = v;
  last_gamma_rate_ = gamma_rate;

  const double lift_rate = params_.lift.step(u_lift, dt);
  const double vz = vehicle_z();
  double new_lift = std::clamp(veh.lift + lift_rate * dt,
                               params_.vehicle.lift_min,
                               params_.vehicle.lift_max);
  const auto tip = vehicle::fork_tip_pose(veh, params_.vehicle);

  // Descending forks (or the carried pallet) come to rest on the highest
  // support surface they cross; the hydraulic pressure collapses while the
  // load path goes through that surface instead of the cylinder.
  bool contact = false;
  if (state_.carried_pallet >= 0) {
    const auto& pal = state_.pallets[state_.carried_pallet];
    double sup = -1e9;
    const double hd = params_.pallet_depth;
    const double hy = params_.pallet_width / 2.0;
    for (const Vec2 corner : {Vec2{0.0, hy}, Vec2{0.0, -hy}, Vec2{-hd, hy},
                              Vec2{-hd, -hy}}) {
      const Vec2 w = pal.pose.transform(corner);
      sup = std::max(sup, support_height(state_, params_, w.x, w.y));
    }
    const double rest_lift = sup - carry_z_offset_ - vz;
    if (veh.lift >= rest_lift - 1e-9 && new_lift <= rest_lift + 1e-9 &&
        lift_rate < 0.0) {
      new_lift = std::max(new_lift, rest_lift);
      contact = true;
      // Support transferred: the pallet stays where it was set down.
      auto& placed = state_.pallets[state_.carried_pallet];
      placed.carried = false;
      placed.z = sup;
      recently_placed_ = state_.carried_pallet;
      state_.carried_pallet = -1;
    }
  } else {
    // Catch surfaces for the bare forks: whatever is under the tips, plus
    // the pocket floor of any pallet the forks are inserted into.
    std::vector<double> catches = {
        support_height(state_, params_, tip.pose.x, tip.pose.y) - vz};
    for (const auto& pal : state_.pallets) {
      if (!pal.carried && insertion_depth(veh, pal, params_) > 0.05)
        catches.push_back(pal.z + 0.02 - vz);
    }
    for (const double sup : catches) {
      if (veh.lift >= sup - 1e-9 && new_lift <= sup + 1e-9 &&
          lift_rate < 0.0) {
        new_lift = std::max(new_lift, sup);
        contact = true;
      }
    }
  }
  fork_in_contact_ = contact;
  veh.lift = new_lift;

  veh.shift = std::clamp(veh.shift + params_.shift.step(u_shift, dt) * dt,
                         -params_.vehicle.shift_max,
                         params_.vehicle.shift_max);
  veh.beta = std::clamp(veh.beta + params_.tilt.step(u_tilt, dt) * dt,
                        -params_.vehicle.beta_max, params_.vehicle.beta_max);

  update_carry();

  for (auto& ob : state_.obstacles) ob.center = ob.center + ob.velocity * dt;
  state_.time += dt;

  SensorBundle bundle;
  bundle.time = state_.time;
  std::normal_distribution<double> gauss(0.0, 1.0);
  bundle.odometry.v = veh.v + noise_.odom_v_sigma * gauss(rng_);
  bundle.odometry.gamma = veh.gamma + noise_.odom_gamma_sigma * gauss(rng_);
  bundle.odometry.gamma_rate = gamma_rate;
  if (noise_.gnss_available(state_.time)) {
    GnssFix fix;
    fix.x = veh.front.x + noise_.gnss_xy_sigma * gauss(rng_);
    fix.y = veh.front.y + noise_.gnss_xy_sigma * gauss(rng_);
    fix.heading = normalize_angle(veh.front.theta +
                                  noise_.gnss_heading_sigma * gauss(rng_));
    bundle.gnss = fix;
  }
  bundle.lift_pressure = pressure_sample();
  bundle.joints = {veh.gamma, veh.beta, veh.lift, veh.shift};

  lidar_elapsed_ += dt;
  if (lidar_elapsed_ >= params_.lidar_period - 1e-9) {
    lidar_elapsed_ = 0.0;
    bundle.front_cloud = lidar_sample(params_.front_lidar, false,
                                      params_.front_lidar.max_range);
    bundle.rear_cloud = lidar_sample(params_.rear_lidar, true,
                                     params_.rear_lidar.max_range);
    bundle.clouds_fresh = true;
  }
  return bundle;
}

namespace {

struct Box {
  Pose2D pose;  // center
  double hx = 0.0, hy = 0.0;
  double z0 = 0.0, z1 = 0.0;
};

// Ray vs upright oriented box; returns the entry distance or a negative
// value on miss.
double ray_box(const Vec2& o, double oz, const Vec2& d, double dz,
               const Box& b) {
  const Vec2 ol = b.pose.inverse_transform(o);
  const Vec2 dl = d.rotated(-b.pose.theta);
  double tmin = 1e-4, tmax = 1e30;
  const double lo[3] = {-b.hx, -b.hy, b.z0};
  const double hi[3] = {b.hx, b.hy, b.z1};
  const double oa[3] = {ol.x, ol.y, oz};
  const double da[3] = {dl.x, dl.y, dz};
  for (int i = 0; i < 3; ++i) {
    if (std::abs(da[i]) < 1e-12) {
      if (oa[i] < lo[i] || oa[i] > hi[i]) return -1.0;
      continue;
    }
    double t0 = (lo[i] - oa[i]) / da[i];
    double t1 = (hi[i] - oa[i]) / da[i];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return -1.0;
  }
  return tmin;
}

}  // namespace

std::vector<mapping::Point3> World::lidar_sample(const LidarConfig& cfg,
                                                 bool rear_mounted,
                                                 double max_range) {
  const Pose2D base =
      rear_mounted ? vehicle::rear_pose(state_.vehicle.front,
                                        state_.vehicle.gamma, params_.vehicle)
                   : state_.vehicle.front;
  const Pose2D sensor = base.compose(cfg.mount);
  const double oz = vehicle_z() + cfg.mount_z;
  const Vec2 origin = sensor.position();

  std::vector<Box> boxes;
  if (state_.truck.present) {
    boxes.push_back({state_.truck.pose, state_.truck.deck_length / 2.0,
                     state_.truck.deck_width / 2.0,
                     state_.truck.underbody_clearance,
                     state_.truck.deck_height});
  }
  for (const auto& pal : state_.pallets) {
    // The pallet origin is at its front face; the box is centered behind it.
    const Vec2 c = pal.pose.transform({-params_.pallet_depth / 2.0, 0.0});
    const Pose2D center{c.x, c.y, pal.pose.theta};
    boxes.push_back({center, params_.pallet_depth / 2.0,
                     params_.pallet_width / 2.0, pal.z,
                     pal.z + params_.vehicle.pallet_height});
    if (pal.load_kind == LoadKind::Box) {
      const double top = pal.z + params_.vehicle.pallet_height;
      boxes.push_back({center, 0.5, 0.5, top, top + 0.8});
    }
  }
  for (const auto& ob : state_.obstacles) {
    const double gz = state_.terrain.height_at(ob.center.x, ob.center.y);
    boxes.push_back({Pose2D{ob.center.x, ob.center.y, 0.0}, ob.half_extents.x,
                     ob.half_extents.y, gz, gz + ob.height});
  }

  const bool flat = state_.terrain.heights.empty();
  std::vector<mapping::Point3> cloud;
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n_az = static_cast<int>(cfg.fov / cfg.azimuth_step) + 1;
  for (int ia = 0; ia < n_az; ++ia) {
    const double az = -cfg.fov / 2.0 + ia * cfg.azimuth_step;
    const double yaw = sensor.theta + az;
    const Vec2 dir_xy = unit(yaw);
    for (const double el : cfg.elevations) {
      const double ce = std::cos(el);
      const Vec2 d{dir_xy.x * ce, dir_xy.y * ce};
      const double dz = std::sin(el);
      double best = max_range;
      bool hit = false;
      if (flat) {
        if (dz < -1e-9) {
          const double t = (state_.terrain.base_z - oz) / dz;
          if (t > 1e-4 && t < best) {
            best = t;
            hit = true;
          }
        }
      } else if (dz < -1e-9) {
        // Coarse march against the height field.
        for (double t = 0.5; t < best; t += 0.25) {
          const Vec2 p = origin + d * t;
          if (oz + dz * t <= state_.terrain.height_at(p.x, p.y)) {
            best = t;
            hit = true;
            break;
          }
        }
      }
      for (const auto& b : boxes) {
        const double t = ray_box(origin, oz, d, dz, b);
        if (t > 0.0 && t < best) {
          best = t;
          hit = true;
        }
      }
      if (!hit) continue;
      if (noise_.lidar_range_sigma > 0.0)
        best += noise_.lidar_range_sigma * gauss(rng_);
      // Into the sensor frame.
      const Vec2 rel = Vec2{d.x * best, d.y * best}.rotated(-sensor.theta);
      cloud.push_back({rel.x, rel.y, dz * best});
    }
  }
  return cloud;
}

std::vector<perception::PalletTruth> World::pallet_truths() const {
  std::vector<perception::PalletTruth> out;
  out.reserve(state_.pallets.size());
  for (const auto& pal : state_.pallets)
    out.push_back({pal.id, pal.pose, pal.z});
  return out;
}

}  // namespace forksim::world
