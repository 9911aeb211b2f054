#pragma once

#include <array>
#include <limits>
#include <vector>

#include "forksim/geometry.hpp"

namespace forksim::planning {

enum class RsSeg { None, Left, Straight, Right };

// Shortest bounded-curvature path with direction changes between two poses.
// Segment lengths are signed (negative = reverse) and expressed in units of
// the turning radius.
struct ReedsSheppPath {
  std::array<RsSeg, 5> type{RsSeg::None, RsSeg::None, RsSeg::None, RsSeg::None,
                            RsSeg::None};
  std::array<double, 5> length{0, 0, 0, 0, 0};
  double total = std::numeric_limits<double>::infinity();  // sum of |length|
};

ReedsSheppPath reeds_shepp(const Pose2D& from, const Pose2D& to, double radius);

double reeds_shepp_distance(const Pose2D& from, const Pose2D& to, double radius);

struct RsSample {
  Pose2D pose;
  bool reverse = false;
  double curvature = 0.0;  // signed geometric curvature
};

// Samples the path at approximately `step` arc-length spacing (world units),
// including the end pose.
std::vector<RsSample> reeds_shepp_sample(const Pose2D& from,
                                         const ReedsSheppPath& path,
                                         double radius, double step);

}  // namespace forksim::planning
