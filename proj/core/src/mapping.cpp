#include "forksim/mapping.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <unordered_map>

namespace forksim::mapping {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double logit(double p) {
  const double q = std::clamp(p, 1e-6, 1.0 - 1e-6);
  return std::log(q / (1.0 - q));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct GridKey {
  int ix, iy, iz;
  bool operator==(const GridKey& o) const {
    return ix == o.ix && iy == o.iy && iz == o.iz;
  }
};
struct GridKeyHash {
  size_t operator()(const GridKey& k) const {
    return static_cast<size_t>(k.ix) * 73856093u ^
           static_cast<size_t>(k.iy) * 19349663u ^
           static_cast<size_t>(k.iz) * 83492791u;
  }
};

}  // namespace

double ElevationCell::obstacle_prob() const { return sigmoid(log_odds); }

LabeledScan classify_scan(const std::vector<Point3>& points,
                          const Pose2D& sensor_pose,
                          const MappingParams& params) {
  (void)sensor_pose;  // points are gravity-aligned in the sensor frame
  LabeledScan out;
  out.points = points;
  out.obstacle_prob.assign(points.size(), 0.5);

  const double r = 3.0 * params.voxel_resolution;  // neighborhood radius
  std::unordered_map<GridKey, std::vector<int>, GridKeyHash> buckets;
  auto key_of = [&](const Point3& p) {
    return GridKey{static_cast<int>(std::floor(p.x / r)),
                   static_cast<int>(std::floor(p.y / r)),
                   static_cast<int>(std::floor(p.z / r))};
  };
  for (size_t i = 0; i < points.size(); ++i)
    buckets[key_of(points[i])].push_back(static_cast<int>(i));

  std::vector<int> nbrs;
  for (size_t i = 0; i < points.size(); ++i) {
    const Point3& p = points[i];
    nbrs.clear();
    const GridKey k = key_of(p);
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const auto it = buckets.find({k.ix + dx, k.iy + dy, k.iz + dz});
          if (it == buckets.end()) continue;
          for (int j : it->second) {
            const double d2 = (points[j].x - p.x) * (points[j].x - p.x) +
                              (points[j].y - p.y) * (points[j].y - p.y) +
                              (points[j].z - p.z) * (points[j].z - p.z);
            if (d2 <= r * r) nbrs.push_back(j);
          }
        }
    if (static_cast<int>(nbrs.size()) < params.k_neighbors) continue;  // 0.5

    // Local plane fit for the surface normal.
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    double ground = std::numeric_limits<double>::infinity();
    for (int j : nbrs) {
      mean += Eigen::Vector3d(points[j].x, points[j].y, points[j].z);
      ground = std::min(ground, points[j].z);
    }
    mean /= static_cast<double>(nbrs.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : nbrs) {
      const Eigen::Vector3d d =
          Eigen::Vector3d(points[j].x, points[j].y, points[j].z) - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(nbrs.size());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
    if (es.info() != Eigen::Success) continue;
    // Degenerate neighborhood: no spatial extent at all.
    if (es.eigenvalues()[2] < 1e-12) continue;
    const Eigen::Vector3d normal = es.eigenvectors().col(0);
    const double vertical_angle =
        std::acos(std::clamp(std::abs(normal.z()), 0.0, 1.0));

    const double height = p.z - ground;
    const double score = params.height_weight * (height - params.height_offset) +
                         params.angle_weight * vertical_angle +
                         params.logistic_bias;
    out.obstacle_prob[i] = clamp01(sigmoid(score));
  }
  return out;
}

VoxelGrid aggregate(const std::vector<LabeledScan>& scans,
                    const std::vector<Pose2D>& poses,
                    const MappingParams& params) {
  VoxelGrid grid;
  grid.resolution = params.voxel_resolution;
  const double res = grid.resolution;

  struct Acc {
    int count = 0;
    double z_sum = 0.0;
    double prob_sum = 0.0;
  };
  std::map<VoxelIndex, Acc> acc;
  for (size_t s = 0; s < scans.size(); ++s) {
    const Pose2D& pose = poses.at(s);
    const LabeledScan& scan = scans[s];
    for (size_t i = 0; i < scan.points.size(); ++i) {
      const Vec2 w = pose.transform({scan.points[i].x, scan.points[i].y});
      const double z = scan.points[i].z;
      const VoxelIndex vi{static_cast<int>(std::floor(w.x / res)),
                          static_cast<int>(std::floor(w.y / res)),
                          static_cast<int>(std::floor(z / res))};
      Acc& a = acc[vi];
      a.count += 1;
      a.z_sum += z;
      a.prob_sum += scan.obstacle_prob[i];
    }
  }

  for (const auto& [vi, a] : acc) {
    if (a.count < params.n_min) continue;  // outlier removal
    VoxelCell c;
    c.point_count = a.count;
    c.mean_height = a.z_sum / a.count;
    c.obstacle_evidence = a.prob_sum / a.count;
    grid.cells[vi] = c;
  }

  // Overhang detection: per column, voxels separated from the ground voxel by
  // a contiguous free gap of at least h_clearance get flagged.
  std::map<std::pair<int, int>, std::vector<VoxelIndex>> columns;
  for (const auto& [vi, c] : grid.cells)
    columns[{vi.ix, vi.iy}].push_back(vi);
  const int gap_cells = static_cast<int>(std::ceil(params.h_clearance / res));
  for (auto& [xy, vis] : columns) {
    std::sort(vis.begin(), vis.end(),
              [](const VoxelIndex& a, const VoxelIndex& b) { return a.iz < b.iz; });
    for (size_t i = 1; i < vis.size(); ++i) {
      const int gap = vis[i].iz - vis[i - 1].iz - 1;
      if (gap >= gap_cells || grid.cells[vis[i - 1]].free_below) {
        grid.cells[vis[i]].free_below = true;
      }
    }
  }
  return grid;
}

const ElevationCell* ElevationMap::cell_at(double x, double y) const {
  const int gx = static_cast<int>(std::floor(x / params_.cell_size));
  const int gy = static_cast<int>(std::floor(y / params_.cell_size));
  const int ts = params_.tile_size;
  const TileIndex ti{static_cast<int>(std::floor(static_cast<double>(gx) / ts)),
                     static_cast<int>(std::floor(static_cast<double>(gy) / ts))};
  const auto it = tiles_.find(ti);
  if (it == tiles_.end()) return nullptr;
  const int cx = gx - ti.tx * ts, cy = gy - ti.ty * ts;
  const ElevationCell& c = it->second[cy * ts + cx];
  if (c.state == CellState::Unknown && c.weight == 0.0) return nullptr;
  return &c;
}

ElevationCell& ElevationMap::mutable_cell_at(double x, double y) {
  const int gx = static_cast<int>(std::floor(x / params_.cell_size));
  const int gy = static_cast<int>(std::floor(y / params_.cell_size));
  const int ts = params_.tile_size;
  const TileIndex ti{static_cast<int>(std::floor(static_cast<double>(gx) / ts)),
                     static_cast<int>(std::floor(static_cast<double>(gy) / ts))};
  auto& tile = tiles_[ti];
  if (tile.empty()) tile.resize(ts * ts);
  const int cx = gx - ti.tx * ts, cy = gy - ti.ty * ts;
  return tile[cy * ts + cx];
}

bool ElevationMap::bounds(double& min_x, double& min_y, double& max_x,
                          double& max_y) const {
  bool any = false;
  min_x = min_y = std::numeric_limits<double>::infinity();
  max_x = max_y = -std::numeric_limits<double>::infinity();
  for_each_cell([&](double x, double y, const ElevationCell&) {
    any = true;
    min_x = std::min(min_x, x);
    min_y = std::min(min_y, y);
    max_x = std::max(max_x, x);
    max_y = std::max(max_y, y);
  });
  return any;
}

std::vector<CellChange> update_elevation(ElevationMap& map,
                                         const VoxelGrid& update,
                                         double timestamp) {
  const MappingParams& params = map.params();
  std::vector<CellChange> changes;

  // Column summaries from the voxel update (overhang voxels excluded).
  struct Col {
    double elev_floor = std::numeric_limits<double>::infinity();
    double elev_top = -std::numeric_limits<double>::infinity();
    double prob = 0.0;
    double weight = 0.0;
    bool any = false;
  };
  std::map<std::pair<int, int>, Col> cols;
  const double res = update.resolution;
  for (const auto& [vi, c] : update.cells) {
    if (c.free_below) continue;  // overhang never writes elevation
    const double x = (vi.ix + 0.5) * res, y = (vi.iy + 0.5) * res;
    const int gx = static_cast<int>(std::floor(x / params.cell_size));
    const int gy = static_cast<int>(std::floor(y / params.cell_size));
    Col& col = cols[{gx, gy}];
    col.any = true;
    col.elev_floor = std::min(col.elev_floor, c.mean_height);
    col.elev_top = std::max(col.elev_top, c.mean_height);
    col.prob = std::max(col.prob, c.obstacle_evidence);
    col.weight += c.point_count;
  }

  for (const auto& [gxy, col] : cols) {
    if (!col.any) continue;
    const double x = (gxy.first + 0.5) * params.cell_size;
    const double y = (gxy.second + 0.5) * params.cell_size;
    const CellState new_state = col.prob >= params.obstacle_state_threshold
                                    ? CellState::Obstacle
                                    : CellState::Floor;
    const double new_elev =
        new_state == CellState::Obstacle ? col.elev_top : col.elev_floor;

    ElevationCell& cell = map.mutable_cell_at(x, y);
    const CellState old_state = cell.state;
    if (cell.state == CellState::Unknown || new_state != cell.state) {
      // First observation, or a state flip: replace outright.
      cell.elevation = new_elev;
      cell.log_odds = logit(col.prob);
      cell.weight = col.weight;
      cell.state = new_state;
    } else {
      // Agreement: fuse. Identical evidence leaves the estimate unchanged.
      const double w = cell.weight + col.weight;
      cell.elevation = (cell.elevation * cell.weight + new_elev * col.weight) / w;
      cell.weight = w;
      cell.log_odds = std::clamp(cell.log_odds + logit(col.prob), -20.0, 20.0);
    }
    cell.last_update = timestamp;
    if (old_state != cell.state)
      changes.push_back({x, y, old_state, cell.state});
  }
  return changes;
}

std::string ElevationMap::dump() const {
  double min_x, min_y, max_x, max_y;
  std::ostringstream os;
  if (!bounds(min_x, min_y, max_x, max_y)) {
    os << "elevation 0 0 " << params_.cell_size << " 0 0\n";
    return os.str();
  }
  const double res = params_.cell_size;
  const int gx0 = static_cast<int>(std::floor(min_x / res));
  const int gy0 = static_cast<int>(std::floor(min_y / res));
  const int gx1 = static_cast<int>(std::floor(max_x / res));
  const int gy1 = static_cast<int>(std::floor(max_y / res));
  const int w = gx1 - gx0 + 1, h = gy1 - gy0 + 1;
  os << "elevation " << gx0 * res << " " << gy0 * res << " " << res << " " << w
     << " " << h << "\n";
  for (int gy = gy0; gy <= gy1; ++gy) {
    for (int gx = gx0; gx <= gx1; ++gx) {
      const ElevationCell* c = cell_at((gx + 0.5) * res, (gy + 0.5) * res);
      os << (c ? c->elevation : 0.0) << (gx == gx1 ? '\n' : ' ');
    }
  }
  for (int gy = gy0; gy <= gy1; ++gy) {
    for (int gx = gx0; gx <= gx1; ++gx) {
      const ElevationCell* c = cell_at((gx + 0.5) * res, (gy + 0.5) * res);
      os << (c ? static_cast<int>(c->state) : 0) << (gx == gx1 ? '\n' : ' ');
    }
  }
  return os.str();
}

CostMap traversability(const ElevationMap& map,
                       const vehicle::VehicleParams& vehicle) {
  const MappingParams& params = map.params();
  CostMap out;
  out.resolution = params.cell_size;
  double min_x, min_y, max_x, max_y;
  if (!map.bounds(min_x, min_y, max_x, max_y)) return out;
  out.origin_x = min_x - 0.5 * out.resolution;
  out.origin_y = min_y - 0.5 * out.resolution;
  out.width = static_cast<int>(std::round((max_x - min_x) / out.resolution)) + 1;
  out.height = static_cast<int>(std::round((max_y - min_y) / out.resolution)) + 1;
  out.state.assign(out.width * out.height, OccState::Unknown);
  out.cost.assign(out.width * out.height, 1.0);

  auto elevation_at = [&](double x, double y, double& z) {
    const ElevationCell* c = map.cell_at(x, y);
    if (!c) return false;
    z = c->elevation;
    return true;
  };

  for (int cy = 0; cy < out.height; ++cy) {
    for (int cx = 0; cx < out.width; ++cx) {
      double x, y;
      out.cell_to_world(cx, cy, x, y);
      const ElevationCell* c = map.cell_at(x, y);
      if (!c) continue;

      // Slope from central differences where neighbors exist.
      const double r = out.resolution;
      double zc = c->elevation, zl = zc, zr = zc, zd = zc, zu = zc;
      double dl = 0, dr = 0, dd = 0, du = 0;
      if (elevation_at(x - r, y, zl)) dl = r;
      if (elevation_at(x + r, y, zr)) dr = r;
      if (elevation_at(x, y - r, zd)) dd = r;
      if (elevation_at(x, y + r, zu)) du = r;
      double gx = 0.0, gy = 0.0;
      if (dl + dr > 0) gx = (zr - zl) / (dl + dr);
      if (dd + du > 0) gy = (zu - zd) / (dd + du);
      const double slope = std::atan(std::hypot(gx, gy));
      const double slope_penalty = clamp01(
          (slope - params.slope_ok) / (params.slope_max - params.slope_ok));

      // Confident floor evidence costs nothing; otherwise the obstacle
      // probability carries through.
      const double p_obs = c->obstacle_prob();
      double cost = std::max(
          p_obs <= params.floor_state_threshold ? 0.0 : p_obs, slope_penalty);
      const int idx = out.index(cx, cy);
      if (cost >= params.occupied_threshold) {
        out.state[idx] = OccState::Occupied;
        out.cost[idx] = 1.0;
      } else {
        out.state[idx] = OccState::Free;
        out.cost[idx] = cost;
      }
    }
  }

  // Inflation: decaying ring cost around occupied cells, below the occupancy
  // threshold so it only biases the search.
  double radius = params.inflation_radius;
  if (radius <= 0.0) {
    const double len = vehicle.part_length + vehicle.l_f + vehicle.l_r +
                       vehicle.fork_mount_offset + vehicle.fork_length;
    radius = std::hypot(0.5 * len, 0.5 * vehicle.part_width);
  }
  const int rc = static_cast<int>(std::ceil(radius / out.resolution));
  std::vector<double> inflated = out.cost;
  for (int cy = 0; cy < out.height; ++cy) {
    for (int cx = 0; cx < out.width; ++cx) {
      if (out.state[out.index(cx, cy)] != OccState::Occupied) continue;
      for (int dy = -rc; dy <= rc; ++dy) {
        for (int dx = -rc; dx <= rc; ++dx) {
          const int nx = cx + dx, ny = cy + dy;
          if (!out.in_bounds(nx, ny)) continue;
          const int nidx = out.index(nx, ny);
          if (out.state[nidx] != OccState::Free) continue;
          const double d = std::hypot(dx, dy) * out.resolution;
          if (d > radius) continue;
          const double decay =
              (params.occupied_threshold - 1e-3) * (1.0 - d / radius);
          inflated[nidx] = std::max(inflated[nidx], decay);
        }
      }
    }
  }
  out.cost = std::move(inflated);
  return out;
}

std::string CostMap::to_pgm() const {
  std::ostringstream os;
  os << "P2\n" << width << " " << height << "\n255\n";
  for (int cy = height - 1; cy >= 0; --cy) {
    for (int cx = 0; cx < width; ++cx) {
      const int idx = index(cx, cy);
      int v = 127;
      if (state[idx] == OccState::Free)
        v = 255 - static_cast<int>(std::round(cost[idx] * 255.0));
      else if (state[idx] == OccState::Occupied)
        v = 0;
      os << v << (cx + 1 == width ? '\n' : ' ');
    }
  }
  return os.str();
}

}  // namespace forksim::mapping
