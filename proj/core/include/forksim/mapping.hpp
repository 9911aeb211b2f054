#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "forksim/geometry.hpp"
#include "forksim/vehicle_model.hpp"

namespace forksim::mapping {

struct Point3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

// One lidar sweep with per-point obstacle evidence, motion-compensated to a
// single timestamp in the sensor frame.
struct LabeledScan {
  double timestamp = 0.0;
  std::vector<Point3> points;
  std::vector<double> obstacle_prob;  // same length as points, in [0,1]
};

struct VoxelIndex {
  int ix = 0, iy = 0, iz = 0;
  bool operator<(const VoxelIndex& o) const {
    if (ix != o.ix) return ix < o.ix;
    if (iy != o.iy) return iy < o.iy;
    return iz < o.iz;
  }
  bool operator==(const VoxelIndex& o) const {
    return ix == o.ix && iy == o.iy && iz == o.iz;
  }
};

struct VoxelCell {
  int point_count = 0;
  double mean_height = 0.0;     // mean z of contributing points
  double obstacle_evidence = 0.0;  // mean obstacle probability
  bool free_below = false;      // contiguous free gap under this voxel
};

// Short-term aggregation of labeled scans at a fixed resolution. Sparse:
// an absent cell means unobserved.
struct VoxelGrid {
  double resolution = 0.10;
  std::map<VoxelIndex, VoxelCell> cells;
};

enum class CellState : std::uint8_t { Unknown = 0, Floor = 1, Obstacle = 2 };

struct ElevationCell {
  double elevation = 0.0;
  double log_odds = 0.0;  // obstacle evidence, log-odds
  double weight = 0.0;    // accumulated fusion weight
  CellState state = CellState::Unknown;
  double last_update = 0.0;
  double obstacle_prob() const;
  // Elevation uncertainty proxy: shrinks as agreeing evidence accumulates.
  double variance() const { return weight > 0.0 ? 1.0 / weight : 1e9; }
};

struct TileIndex {
  int tx = 0, ty = 0;
  bool operator<(const TileIndex& o) const {
    return tx != o.tx ? tx < o.tx : ty < o.ty;
  }
};

struct MappingParams {
  double voxel_resolution = 0.10;
  double cell_size = 0.10;
  int tile_size = 64;  // cells per tile edge
  int n_min = 3;       // voxel support threshold
  double h_clearance = 2.0;   // overhang free-gap height, meters
  double slope_ok = 10.0 * kPi / 180.0;
  double slope_max = 20.0 * kPi / 180.0;
  double occupied_threshold = 0.65;
  double inflation_radius = 0.0;   // meters; 0 = footprint circumradius
  int k_neighbors = 8;             // normal estimation neighborhood
  double height_weight = 4.0;      // logistic weight per meter above offset
  double height_offset = 0.15;     // meters above local ground
  double angle_weight = 3.0;       // logistic weight per radian from vertical
  double logistic_bias = -2.0;
  double obstacle_state_threshold = 0.65;  // prob above -> obstacle state
  double floor_state_threshold = 0.35;     // prob below -> floor state
};

// Long-term 2.5D elevation memory, tiled for sparse worlds.
class ElevationMap {
 public:
  explicit ElevationMap(const MappingParams& params = {}) : params_(params) {}

  const ElevationCell* cell_at(double x, double y) const;
  ElevationCell& mutable_cell_at(double x, double y);
  bool empty() const { return tiles_.empty(); }
  const MappingParams& params() const { return params_; }

  // Bounding box of observed cells in world coordinates (cell centers).
  bool bounds(double& min_x, double& min_y, double& max_x, double& max_y) const;

  template <typename Fn>
  void for_each_cell(Fn&& fn) const {
    for (const auto& [ti, tile] : tiles_) {
      for (int cy = 0; cy < params_.tile_size; ++cy) {
        for (int cx = 0; cx < params_.tile_size; ++cx) {
          const ElevationCell& c = tile[cy * params_.tile_size + cx];
          if (c.state == CellState::Unknown && c.weight == 0.0) continue;
          const double x =
              (ti.tx * params_.tile_size + cx + 0.5) * params_.cell_size;
          const double y =
              (ti.ty * params_.tile_size + cy + 0.5) * params_.cell_size;
          fn(x, y, c);
        }
      }
    }
  }

  std::string dump() const;

 private:
  MappingParams params_;
  std::map<TileIndex, std::vector<ElevationCell>> tiles_;
};

enum class OccState : std::uint8_t { Free = 0, Occupied = 1, Unknown = 2 };

// Planar occupancy and traversal-cost grid derived from the elevation map.
struct CostMap {
  double origin_x = 0.0, origin_y = 0.0;
  double resolution = 0.10;
  int width = 0, height = 0;
  std::vector<OccState> state;  // row-major, width * height
  std::vector<double> cost;     // [0,1], occupied cells have cost 1

  bool in_bounds(int cx, int cy) const {
    return cx >= 0 && cy >= 0 && cx < width && cy < height;
  }
  int index(int cx, int cy) const { return cy * width + cx; }
  void world_to_cell(double x, double y, int& cx, int& cy) const {
    cx = static_cast<int>(std::floor((x - origin_x) / resolution));
    cy = static_cast<int>(std::floor((y - origin_y) / resolution));
  }
  void cell_to_world(int cx, int cy, double& x, double& y) const {
    x = origin_x + (cx + 0.5) * resolution;
    y = origin_y + (cy + 0.5) * resolution;
  }
  OccState state_at(double x, double y) const {
    int cx, cy;
    world_to_cell(x, y, cx, cy);
    if (!in_bounds(cx, cy)) return OccState::Unknown;
    return state[index(cx, cy)];
  }

  std::string to_pgm() const;
};

// Per-point obstacle probability from height above local ground and surface
// normal inclination, estimated from point neighborhoods.
LabeledScan classify_scan(const std::vector<Point3>& points,
                          const Pose2D& sensor_pose,
                          const MappingParams& params = {});

// Bins labeled scans (already in world frame via their poses) into a sparse
// voxel grid, removing weakly supported voxels and flagging overhangs.
VoxelGrid aggregate(const std::vector<LabeledScan>& scans,
                    const std::vector<Pose2D>& poses,
                    const MappingParams& params = {});

struct CellChange {
  double x = 0.0, y = 0.0;
  CellState from = CellState::Unknown;
  CellState to = CellState::Unknown;
};

// Fuses a voxel-grid update into the elevation map. Agreeing observations
// blend; a state flip replaces the cell outright.
std::vector<CellChange> update_elevation(ElevationMap& map,
                                         const VoxelGrid& update,
                                         double timestamp);

// Derives the planar cost/occupancy map from obstacle probability and slope.
CostMap traversability(const ElevationMap& map,
                       const vehicle::VehicleParams& vehicle);

}  // namespace forksim::mapping
