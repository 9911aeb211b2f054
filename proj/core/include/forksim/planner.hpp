#pragma once

#include <atomic>
#include <cstdint>
#include <vector>

#include "forksim/icr.hpp"
#include "forksim/mapping.hpp"
#include "forksim/reeds_shepp.hpp"

namespace forksim::planning {

struct PathPose {
  Pose2D pose;
  bool reverse = false;
  double curvature = 0.0;  // 1/m, signed
};

struct PathSegment {
  int first = 0;  // inclusive index into poses
  int last = 0;   // inclusive
  bool reverse = false;
};

// Planned path: pose samples with driving direction and curvature, plus
// maximal constant-direction segments. Turning poses are the boundaries
// between segments.
struct Path {
  std::vector<PathPose> poses;
  std::vector<PathSegment> segments;
  double cost = 0.0;  // search cost including penalties

  std::vector<int> turning_pose_indices() const;
  double length() const;  // summed arc length, meters
};

std::vector<PathSegment> split_segments(const Path& path);

struct PlannerParams {
  double grid_resolution = 0.2;
  int heading_bins = 72;
  double max_curvature = 0.0;  // 0 -> derived from vehicle articulation limit
  double primitive_length = 0.6;
  double reverse_penalty = 1.3;
  double switch_penalty = 2.0;  // meters-equivalent per direction change
  int analytic_period = 10;     // Reeds-Shepp expansion attempt interval
  double goal_tol_xy = 0.15;
  double goal_tol_theta = 0.10;
  bool unknown_traversable = false;
  std::int64_t node_budget = 400000;
  double footprint_margin = 0.05;  // collision-check padding, meters
};

enum class PlanStatus { Ok, NoPathFound, StartOrGoalOccupied };

struct PlanResult {
  PlanStatus status = PlanStatus::NoPathFound;
  Path path;
  std::int64_t expansions = 0;
};

// Cooperative cancellation for long searches; checked every expansion batch.
using CancelToken = std::atomic<bool>;

PlanResult plan(const Pose2D& start, const Pose2D& goal,
                const mapping::CostMap& costmap,
                const vehicle::VehicleParams& vehicle,
                const PlannerParams& params, const CancelToken* cancel = nullptr);

// Collision predicate used by the planner: rectangular vehicle footprint
// (plus margin) tested against occupied or, optionally, unknown cells.
bool footprint_collides(const Pose2D& pose, const mapping::CostMap& costmap,
                        const vehicle::VehicleParams& vehicle,
                        bool unknown_traversable, double margin);

std::string path_to_csv(const Path& path);

}  // namespace forksim::planning
