#include "forksim/perception.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

namespace forksim::perception {
namespace {

struct BucketKey {
  int ix, iy, iz;
  bool operator<(const BucketKey& o) const {
    return std::tie(ix, iy, iz) < std::tie(o.ix, o.iy, o.iz);
  }
};

// Uniform-grid neighbor index with bucket edge equal to the query radius.
class BucketIndex {
 public:
  BucketIndex(const std::vector<Point3>& pts, double radius)
      : pts_(pts), radius_(radius) {
    for (size_t i = 0; i < pts.size(); ++i)
      buckets_[key(pts[i])].push_back(static_cast<int>(i));
  }

  template <typename Fn>
  void for_each_neighbor(const Point3& p, Fn&& fn) const {
    const BucketKey k = key(p);
    const double r2 = radius_ * radius_;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const auto it = buckets_.find({k.ix + dx, k.iy + dy, k.iz + dz});
          if (it == buckets_.end()) continue;
          for (int idx : it->second) {
            const Point3& q = pts_[idx];
            const double ddx = q.x - p.x, ddy = q.y - p.y, ddz = q.z - p.z;
            if (ddx * ddx + ddy * ddy + ddz * ddz <= r2) fn(idx);
          }
        }
  }

  int count_neighbors(const Point3& p) const {
    int n = 0;
    for_each_neighbor(p, [&](int) { ++n; });
    return n;
  }

 private:
  BucketKey key(const Point3& p) const {
    return {static_cast<int>(std::floor(p.x / radius_)),
            static_cast<int>(std::floor(p.y / radius_)),
            static_cast<int>(std::floor(p.z / radius_))};
  }
  const std::vector<Point3>& pts_;
  double radius_;
  std::map<BucketKey, std::vector<int>> buckets_;
};

Eigen::Vector3d to_vec(const Point3& p) { return {p.x, p.y, p.z}; }

// PCA normal over a neighborhood; zero vector when degenerate.
Eigen::Vector3d pca_normal(const std::vector<Point3>& pts,
                           const std::vector<int>& idx) {
  if (idx.size() < 3) return Eigen::Vector3d::Zero();
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (int i : idx) mean += to_vec(pts[i]);
  mean /= static_cast<double>(idx.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int i : idx) {
    const Eigen::Vector3d d = to_vec(pts[i]) - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  if (es.eigenvalues()(1) < 1e-12) return Eigen::Vector3d::Zero();
  return es.eigenvectors().col(0);
}

double point_line_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& a,
                           const Eigen::Vector3d& dir) {
  return ((p - a) - (p - a).dot(dir) * dir).norm();
}

}  // namespace

EdgeResult detect_loading_edge(const std::vector<Point3>& cloud,
                               const Pose2D& sensor_tf,
                               const EdgeParams& params) {
  EdgeResult result;

  // Into the globally planar frame.
  std::vector<Point3> world;
  world.reserve(cloud.size());
  const double c = std::cos(sensor_tf.theta), s = std::sin(sensor_tf.theta);
  for (const Point3& p : cloud)
    world.push_back({sensor_tf.x + c * p.x - s * p.y,
                     sensor_tf.y + s * p.x + c * p.y, p.z});

  // Radius outlier removal.
  {
    BucketIndex idx(world, params.outlier_radius);
    std::vector<Point3> kept;
    kept.reserve(world.size());
    for (const Point3& p : world)
      if (idx.count_neighbors(p) >= params.outlier_min_neighbors + 1)
        kept.push_back(p);
    world.swap(kept);
  }

  // Height band.
  {
    std::vector<Point3> kept;
    kept.reserve(world.size());
    for (const Point3& p : world)
      if (p.z >= params.z_min && p.z <= params.z_max) kept.push_back(p);
    world.swap(kept);
  }
  if (world.size() < 3) return result;

  // Per-point normals, then edge candidates: a neighborhood holding both a
  // near-vertical and a near-horizontal normal straddles the deck edge.
  BucketIndex idx(world, params.neighborhood_radius);
  const double cos_vert = std::cos(params.vertical_max_angle);
  const double sin_horiz = std::sin(params.horizontal_max_angle);
  std::vector<Eigen::Vector3d> normals(world.size(), Eigen::Vector3d::Zero());
  std::vector<std::uint8_t> vertical(world.size(), 0), horizontal(world.size(), 0);
  std::vector<int> nbrs;
  for (size_t i = 0; i < world.size(); ++i) {
    nbrs.clear();
    idx.for_each_neighbor(world[i], [&](int j) { nbrs.push_back(j); });
    normals[i] = pca_normal(world, nbrs);
    const double nz = std::abs(normals[i].z());
    if (normals[i].squaredNorm() < 0.5) continue;
    vertical[i] = nz >= cos_vert;
    horizontal[i] = nz <= sin_horiz;
  }
  std::vector<int> candidates;
  for (size_t i = 0; i < world.size(); ++i) {
    bool has_v = false, has_h = false;
    idx.for_each_neighbor(world[i], [&](int j) {
      has_v |= vertical[j] != 0;
      has_h |= horizontal[j] != 0;
    });
    if (has_v && has_h) candidates.push_back(static_cast<int>(i));
  }
  result.candidate_count = static_cast<int>(candidates.size());
  if (result.candidate_count < params.n_ransac_min) return result;

  // RANSAC line over the candidates.
  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<int> pick(0, result.candidate_count - 1);
  int best_inliers = -1;
  Eigen::Vector3d best_a = Eigen::Vector3d::Zero(),
                  best_d = Eigen::Vector3d::UnitX();
  for (int it = 0; it < params.ransac_iterations; ++it) {
    const int i = candidates[pick(rng)];
    const int j = candidates[pick(rng)];
    if (i == j) continue;
    const Eigen::Vector3d a = to_vec(world[i]);
    Eigen::Vector3d d = to_vec(world[j]) - a;
    const double len = d.norm();
    if (len < 1e-6) continue;
    d /= len;
    int inliers = 0;
    for (int k : candidates)
      if (point_line_distance(to_vec(world[k]), a, d) <=
          params.ransac_inlier_band)
        ++inliers;
    if (inliers > best_inliers) {
      best_inliers = inliers;
      best_a = a;
      best_d = d;
    }
  }
  if (best_inliers < params.n_ransac_min) return result;

  // The RANSAC line localizes the edge; the precise line is recovered as the
  // intersection of the deck plane and the front-face plane fitted over the
  // surface points supporting it.
  const double support_radius = 0.45;
  const auto fit_plane = [&](const std::vector<std::uint8_t>& mask,
                             Eigen::Vector3d& n_out, double& d_out) {
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    int count = 0;
    for (size_t i = 0; i < world.size(); ++i) {
      if (!mask[i]) continue;
      if (point_line_distance(to_vec(world[i]), best_a, best_d) >
          support_radius)
        continue;
      mean += to_vec(world[i]);
      ++count;
    }
    if (count < 3) return false;
    mean /= static_cast<double>(count);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (size_t i = 0; i < world.size(); ++i) {
      if (!mask[i]) continue;
      if (point_line_distance(to_vec(world[i]), best_a, best_d) >
          support_radius)
        continue;
      const Eigen::Vector3d d = to_vec(world[i]) - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    if (es.eigenvalues()(1) < 1e-12) return false;
    n_out = es.eigenvectors().col(0);
    d_out = n_out.dot(mean);
    return true;
  };
  Eigen::Vector3d n_deck, n_face;
  double d_deck, d_face;
  if (!fit_plane(vertical, n_deck, d_deck)) return result;
  if (!fit_plane(horizontal, n_face, d_face)) return result;

  Eigen::Vector3d dir = n_deck.cross(n_face);
  if (dir.norm() < 1e-6) return result;
  dir.normalize();
  // Closest point on the plane intersection to the RANSAC anchor.
  Eigen::Matrix<double, 2, 3> A;
  A.row(0) = n_deck.transpose();
  A.row(1) = n_face.transpose();
  const Eigen::Vector2d b(d_deck - n_deck.dot(best_a),
                          d_face - n_face.dot(best_a));
  const Eigen::Vector3d anchor =
      best_a + A.transpose() * (A * A.transpose()).inverse() * b;

  // Orient the face normal away from the deck interior, then the edge
  // direction so that up x normal agrees with it.
  Eigen::Vector3d deck_centroid = Eigen::Vector3d::Zero();
  int deck_count = 0;
  for (size_t i = 0; i < world.size(); ++i) {
    if (!vertical[i]) continue;
    if (point_line_distance(to_vec(world[i]), anchor, dir) > 1.0) continue;
    deck_centroid += to_vec(world[i]);
    ++deck_count;
  }
  if (deck_count == 0) return result;
  deck_centroid /= static_cast<double>(deck_count);
  Eigen::Vector3d normal = n_face;
  if (normal.dot(deck_centroid - anchor) > 0.0) normal = -normal;
  normal -= normal.dot(dir) * dir;
  if (normal.norm() < 1e-9) return result;
  normal.normalize();
  const Eigen::Vector3d up(0.0, 0.0, 1.0);
  if (dir.dot(up.cross(normal)) < 0.0) dir = -dir;

  // Edge extent and support ratio from the candidates near the refined line.
  int supported = 0;
  double t_min = std::numeric_limits<double>::infinity();
  double t_max = -std::numeric_limits<double>::infinity();
  for (int k : candidates) {
    const Eigen::Vector3d p = to_vec(world[k]);
    if (point_line_distance(p, anchor, dir) > params.neighborhood_radius)
      continue;
    ++supported;
    const double t = (p - anchor).dot(dir);
    t_min = std::min(t_min, t);
    t_max = std::max(t_max, t);
  }
  if (supported < params.n_ransac_min) return result;
  const Eigen::Vector3d origin = anchor + t_min * dir;

  result.frame.origin = {origin.x(), origin.y(), origin.z()};
  result.frame.direction = {dir.x(), dir.y(), dir.z()};
  result.frame.normal = {normal.x(), normal.y(), normal.z()};
  result.frame.edge_length = t_max - t_min;
  result.inlier_ratio =
      static_cast<double>(supported) / result.candidate_count;
  result.status = result.inlier_ratio < params.min_inlier_ratio
                      ? EdgeStatus::LowConfidence
                      : EdgeStatus::Ok;
  return result;
}

std::vector<Slot> slots_from_pattern(const LoadingEdgeFrame& frame,
                                     const std::vector<SlotOffset>& pattern) {
  std::vector<Slot> slots;
  const double heading = std::atan2(frame.normal.y, frame.normal.x);
  for (size_t i = 0; i < pattern.size(); ++i) {
    const SlotOffset& off = pattern[i];
    if (off.along < 0.0 || off.along > frame.edge_length) continue;
    Slot slot;
    slot.index = static_cast<int>(i);
    slot.pose.x = frame.origin.x + off.along * frame.direction.x -
                  off.depth * frame.normal.x;
    slot.pose.y = frame.origin.y + off.along * frame.direction.y -
                  off.depth * frame.normal.y;
    slot.pose.theta = heading;
    slot.z = frame.origin.z;
    slots.push_back(slot);
  }
  return slots;
}

std::vector<ObstacleCluster> cluster_obstacles(const std::vector<Point3>& cloud,
                                               double ground_z,
                                               const ClusterParams& params) {
  std::vector<Point3> pts;
  pts.reserve(cloud.size());
  for (const Point3& p : cloud) {
    const double h = p.z - ground_z;
    if (h >= params.band_low && h <= params.band_high) pts.push_back(p);
  }

  BucketIndex idx(pts, params.eps);
  const int n = static_cast<int>(pts.size());
  std::vector<int> label(n, -1);  // -1 unvisited, -2 noise, >=0 cluster id
  int next_cluster = 0;
  std::vector<int> nbrs, frontier;
  for (int i = 0; i < n; ++i) {
    if (label[i] != -1) continue;
    nbrs.clear();
    idx.for_each_neighbor(pts[i], [&](int j) { nbrs.push_back(j); });
    if (static_cast<int>(nbrs.size()) < params.min_pts) {
      label[i] = -2;
      continue;
    }
    const int cid = next_cluster++;
    label[i] = cid;
    frontier = nbrs;
    while (!frontier.empty()) {
      const int j = frontier.back();
      frontier.pop_back();
      if (label[j] == -2) label[j] = cid;  // border point
      if (label[j] != -1) continue;
      label[j] = cid;
      nbrs.clear();
      idx.for_each_neighbor(pts[j], [&](int k) { nbrs.push_back(k); });
      if (static_cast<int>(nbrs.size()) >= params.min_pts)
        frontier.insert(frontier.end(), nbrs.begin(), nbrs.end());
    }
  }

  std::vector<ObstacleCluster> clusters(next_cluster);
  for (auto& cl : clusters) {
    cl.min_corner = {std::numeric_limits<double>::infinity(),
                     std::numeric_limits<double>::infinity(),
                     std::numeric_limits<double>::infinity()};
    cl.max_corner = {-std::numeric_limits<double>::infinity(),
                     -std::numeric_limits<double>::infinity(),
                     -std::numeric_limits<double>::infinity()};
  }
  for (int i = 0; i < n; ++i) {
    if (label[i] < 0) continue;
    ObstacleCluster& cl = clusters[label[i]];
    cl.centroid.x += pts[i].x;
    cl.centroid.y += pts[i].y;
    cl.centroid.z += pts[i].z;
    cl.min_corner.x = std::min(cl.min_corner.x, pts[i].x);
    cl.min_corner.y = std::min(cl.min_corner.y, pts[i].y);
    cl.min_corner.z = std::min(cl.min_corner.z, pts[i].z);
    cl.max_corner.x = std::max(cl.max_corner.x, pts[i].x);
    cl.max_corner.y = std::max(cl.max_corner.y, pts[i].y);
    cl.max_corner.z = std::max(cl.max_corner.z, pts[i].z);
    ++cl.point_count;
  }
  for (auto& cl : clusters) {
    cl.centroid.x /= cl.point_count;
    cl.centroid.y /= cl.point_count;
    cl.centroid.z /= cl.point_count;
  }
  return clusters;
}

std::vector<ObstacleTrack> track_obstacles(
    const std::vector<ObstacleTrack>& tracks,
    const std::vector<ObstacleCluster>& clusters, double dt,
    const TrackerParams& params) {
  std::vector<ObstacleTrack> out = tracks;

  // Constant-velocity prediction.
  Eigen::Matrix4d F = Eigen::Matrix4d::Identity();
  F(0, 2) = F(1, 3) = dt;
  const double q = params.accel_noise * params.accel_noise;
  Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
  const double dt2 = dt * dt, dt3 = dt2 * dt, dt4 = dt3 * dt;
  Q(0, 0) = Q(1, 1) = q * dt4 / 4.0;
  Q(0, 2) = Q(2, 0) = Q(1, 3) = Q(3, 1) = q * dt3 / 2.0;
  Q(2, 2) = Q(3, 3) = q * dt2;
  for (ObstacleTrack& t : out) {
    t.state = F * t.state;
    t.cov = F * t.cov * F.transpose() + Q;
    ++t.age;
  }

  Eigen::Matrix<double, 2, 4> H = Eigen::Matrix<double, 2, 4>::Zero();
  H(0, 0) = H(1, 1) = 1.0;
  const Eigen::Matrix2d R =
      params.meas_sigma * params.meas_sigma * Eigen::Matrix2d::Identity();

  // Globally greedy gated assignment, ordered by Mahalanobis distance.
  struct Pair {
    double d2;
    int track, cluster;
  };
  std::vector<Pair> pairs;
  for (size_t ti = 0; ti < out.size(); ++ti) {
    const Eigen::Matrix2d S = H * out[ti].cov * H.transpose() + R;
    const Eigen::Matrix2d Si = S.inverse();
    for (size_t ci = 0; ci < clusters.size(); ++ci) {
      const Eigen::Vector2d y(clusters[ci].centroid.x - out[ti].state(0),
                              clusters[ci].centroid.y - out[ti].state(1));
      const double d2 = y.dot(Si * y);
      if (d2 <= params.gate_d2)
        pairs.push_back({d2, static_cast<int>(ti), static_cast<int>(ci)});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return a.d2 != b.d2 ? a.d2 < b.d2
                        : std::tie(a.track, a.cluster) <
                              std::tie(b.track, b.cluster);
  });
  std::vector<bool> track_used(out.size(), false),
      cluster_used(clusters.size(), false);
  for (const Pair& p : pairs) {
    if (track_used[p.track] || cluster_used[p.cluster]) continue;
    track_used[p.track] = true;
    cluster_used[p.cluster] = true;
    ObstacleTrack& t = out[p.track];
    const ObstacleCluster& cl = clusters[p.cluster];
    const Eigen::Vector2d y(cl.centroid.x - t.state(0),
                            cl.centroid.y - t.state(1));
    const Eigen::Matrix2d S = H * t.cov * H.transpose() + R;
    const Eigen::Matrix<double, 4, 2> K =
        t.cov * H.transpose() * S.inverse();
    t.state += K * y;
    t.cov = (Eigen::Matrix4d::Identity() - K * H) * t.cov;
    t.extent = {0.5 * (cl.max_corner.x - cl.min_corner.x),
                0.5 * (cl.max_corner.y - cl.min_corner.y),
                cl.max_corner.z - cl.min_corner.z};
    t.misses = 0;
    ++t.hits;
  }

  int next_id = 0;
  for (const ObstacleTrack& t : tracks) next_id = std::max(next_id, t.id + 1);
  for (size_t ci = 0; ci < clusters.size(); ++ci) {
    if (cluster_used[ci]) continue;
    const ObstacleCluster& cl = clusters[ci];
    ObstacleTrack t;
    t.id = next_id++;
    t.state << cl.centroid.x, cl.centroid.y, 0.0, 0.0;
    t.cov = Eigen::Matrix4d::Identity();
    t.cov(0, 0) = t.cov(1, 1) = params.meas_sigma * params.meas_sigma;
    t.cov(2, 2) = t.cov(3, 3) = 4.0;  // loose velocity prior
    t.extent = {0.5 * (cl.max_corner.x - cl.min_corner.x),
                0.5 * (cl.max_corner.y - cl.min_corner.y),
                cl.max_corner.z - cl.min_corner.z};
    t.hits = 1;
    out.push_back(t);
  }

  std::vector<ObstacleTrack> alive;
  for (size_t ti = 0; ti < out.size(); ++ti) {
    if (ti < track_used.size() && !track_used[ti]) ++out[ti].misses;
    if (out[ti].misses < params.n_miss) alive.push_back(out[ti]);
  }
  return alive;
}

namespace {
// Distance from a point to the vehicle rectangle at the given pose.
double footprint_distance(const Eigen::Vector2d& p, const Pose2D& pose,
                          const vehicle::VehicleParams& vehicle) {
  const double x_max = vehicle.part_length - vehicle.l_f;
  const double x_min =
      -(vehicle.l_f + vehicle.l_r + vehicle.fork_mount_offset +
        vehicle.fork_length);
  const double hw = 0.5 * vehicle.part_width;
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  const double dx = p.x() - pose.x, dy = p.y() - pose.y;
  const double lx = c * dx + s * dy;
  const double ly = -s * dx + c * dy;
  const double ex = std::max({x_min - lx, 0.0, lx - x_max});
  const double ey = std::max(std::abs(ly) - hw, 0.0);
  return std::hypot(ex, ey);
}
}  // namespace

std::vector<CollisionWarning> predict_collision(
    const std::vector<ObstacleTrack>& tracks, const planning::Path& path,
    const vehicle::VehicleParams& vehicle, double vehicle_speed, double decel,
    double safety_margin, const CollisionParams& params) {
  std::vector<CollisionWarning> warnings;
  if (path.poses.empty()) return warnings;

  // Cumulative arc length over path poses.
  std::vector<double> arc(path.poses.size(), 0.0);
  for (size_t i = 1; i < path.poses.size(); ++i)
    arc[i] = arc[i - 1] + (path.poses[i].pose.position() -
                           path.poses[i - 1].pose.position())
                              .norm();
  const double path_len = arc.back();
  const auto pose_at = [&](double s) {
    const auto it = std::lower_bound(arc.begin(), arc.end(), s);
    const size_t i = std::min<size_t>(it - arc.begin(), arc.size() - 1);
    return path.poses[i].pose;
  };

  const double stop_dist = decel > 0.0
                               ? vehicle_speed * vehicle_speed / (2.0 * decel) +
                                     safety_margin
                               : std::numeric_limits<double>::infinity();

  for (const ObstacleTrack& t : tracks) {
    const double radius = std::hypot(t.extent.x, t.extent.y);
    for (double tc = 0.0; tc <= params.horizon + 1e-9; tc += params.time_step) {
      const double s = std::min(std::abs(vehicle_speed) * tc, path_len);
      const Pose2D vp = pose_at(s);
      const Eigen::Vector2d op = t.position() + t.velocity() * tc;
      if (footprint_distance(op, vp, vehicle) <= params.clearance + radius) {
        CollisionWarning w;
        w.track_id = t.id;
        w.time_to_conflict = tc;
        w.conflict_distance = s;
        w.location = op;
        w.within_stopping_envelope = s <= stop_dist;
        warnings.push_back(w);
        break;
      }
    }
  }
  return warnings;
}

std::vector<estimation::PalletDetectionMeas> synth_pallet_detect(
    const std::vector<PalletTruth>& pallets, const Pose2D& camera_pose,
    const DetectionNoise& noise, std::mt19937_64& rng) {
  std::vector<estimation::PalletDetectionMeas> detections;
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (const PalletTruth& p : pallets) {
    const Pose2D rel = camera_pose.between(p.pose);
    const double d = std::hypot(rel.x, rel.y);
    if (d > noise.max_range || d < 1e-6) continue;
    const double bearing = std::atan2(rel.y, rel.x);
    if (std::abs(bearing) > noise.max_view_angle) continue;
    // Relative yaw of the pallet face against the viewing ray.
    const double psi = normalize_angle(rel.theta - bearing);
    if (noise.enabled) {
      const double p_miss = std::min(
          1.0, noise.miss_per_psi *
                   std::max(0.0, std::abs(psi) - noise.psi_reliable));
      if (uni(rng) < p_miss) continue;
    }

    const double sigma_d = noise.sigma_x_quad * d * d;
    const double sigma_l = noise.sigma_y0 + noise.sigma_y_psi * std::abs(psi);
    const double sigma_psi =
        noise.sigma_psi0 + noise.sigma_psi_psi * std::abs(psi);

    estimation::PalletDetectionMeas m;
    m.rel = rel;
    m.z_rel = p.z;
    if (noise.enabled) {
      // Depth error along the viewing ray, lateral error across it, so the
      // error redistributes between x and y with the bearing.
      const double nd = sigma_d * gauss(rng);
      const double nl = sigma_l * gauss(rng);
      const double cb = std::cos(bearing), sb = std::sin(bearing);
      m.rel.x += nd * cb - nl * sb;
      m.rel.y += nd * sb + nl * cb;
      m.rel.theta = normalize_angle(m.rel.theta + sigma_psi * gauss(rng));
      m.z_rel += noise.sigma_z * gauss(rng);
    }
    Eigen::Matrix2d ray_cov = Eigen::Matrix2d::Zero();
    ray_cov(0, 0) = std::max(sigma_d * sigma_d, 1e-8);
    ray_cov(1, 1) = std::max(sigma_l * sigma_l, 1e-8);
    Eigen::Matrix2d rot;
    rot << std::cos(bearing), -std::sin(bearing), std::sin(bearing),
        std::cos(bearing);
    m.cov = Eigen::Matrix4d::Zero();
    m.cov.topLeftCorner<2, 2>() = rot * ray_cov * rot.transpose();
    m.cov(2, 2) = std::max(sigma_psi * sigma_psi, 1e-8);
    m.cov(3, 3) = std::max(noise.sigma_z * noise.sigma_z, 1e-8);
    detections.push_back(m);
  }
  return detections;
}

}  // namespace forksim::perception
