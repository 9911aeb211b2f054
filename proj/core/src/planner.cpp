#include "forksim/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <sstream>
#include <unordered_map>

namespace forksim::planning {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Footprint {
  double x_min, x_max;  // along heading, front-axle frame
  double half_width;
};

Footprint make_footprint(const vehicle::VehicleParams& v) {
  Footprint f;
  f.x_max = v.part_length - v.l_f;  // front bumper ahead of the front axle
  f.x_min = -(v.l_f + v.l_r + v.fork_mount_offset + v.fork_length);
  f.half_width = 0.5 * v.part_width;
  return f;
}

bool cell_blocked(const mapping::CostMap& map, int cx, int cy,
                  bool unknown_traversable) {
  if (!map.in_bounds(cx, cy)) return !unknown_traversable;
  const mapping::OccState s = map.state[map.index(cx, cy)];
  if (s == mapping::OccState::Occupied) return true;
  if (s == mapping::OccState::Unknown) return !unknown_traversable;
  return false;
}

// Exact 1D squared distance transform (lower envelope of parabolas).
void edt_1d(const std::vector<double>& f, std::vector<double>& d, int n) {
  std::vector<int> v(n);
  std::vector<double> z(n + 1);
  int k = 0;
  v[0] = 0;
  z[0] = -kInf;
  z[1] = kInf;
  for (int q = 1; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (f[v[k]] == kInf) {
      v[k] = q;
      continue;
    }
    double s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]));
    while (k > 0 && s <= z[k]) {
      --k;
      s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * (q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = kInf;
  }
  k = 0;
  for (int q = 0; q < n; ++q) {
    while (z[k + 1] < q) ++k;
    const double dq = q - v[k];
    d[q] = f[v[k]] == kInf ? kInf : dq * dq + f[v[k]];
  }
}

// Euclidean distance (meters) from each cell center to the nearest blocked
// cell center. Cells outside the grid count as blocked at the boundary.
struct DistanceField {
  int width = 0, height = 0;
  double resolution = 0.1;
  double origin_x = 0.0, origin_y = 0.0;
  std::vector<double> dist;

  double at(double x, double y) const {
    const int cx = static_cast<int>(std::floor((x - origin_x) / resolution));
    const int cy = static_cast<int>(std::floor((y - origin_y) / resolution));
    if (cx < 0 || cy < 0 || cx >= width || cy >= height) return 0.0;
    return dist[cy * width + cx];
  }
};

DistanceField build_distance_field(const mapping::CostMap& map,
                                   bool unknown_traversable) {
  DistanceField df;
  df.width = map.width;
  df.height = map.height;
  df.resolution = map.resolution;
  df.origin_x = map.origin_x;
  df.origin_y = map.origin_y;
  const int n = map.width * map.height;
  std::vector<double> sq(n);
  for (int cy = 0; cy < map.height; ++cy)
    for (int cx = 0; cx < map.width; ++cx)
      sq[cy * map.width + cx] =
          cell_blocked(map, cx, cy, unknown_traversable) ? 0.0 : kInf;

  std::vector<double> col(map.height), cold(map.height);
  for (int cx = 0; cx < map.width; ++cx) {
    for (int cy = 0; cy < map.height; ++cy) col[cy] = sq[cy * map.width + cx];
    edt_1d(col, cold, map.height);
    for (int cy = 0; cy < map.height; ++cy) sq[cy * map.width + cx] = cold[cy];
  }
  std::vector<double> row(map.width), rowd(map.width);
  df.dist.resize(n);
  for (int cy = 0; cy < map.height; ++cy) {
    for (int cx = 0; cx < map.width; ++cx) row[cx] = sq[cy * map.width + cx];
    edt_1d(row, rowd, map.width);
    for (int cx = 0; cx < map.width; ++cx) {
      const double d = rowd[cx];
      // Distance to the grid border also blocks (outside is unobserved).
      const double bx = std::min(cx + 1, map.width - cx);
      const double by = std::min(cy + 1, map.height - cy);
      const double border = std::min(bx, by);
      const double dd = d == kInf ? border : std::min(std::sqrt(d), border);
      df.dist[cy * map.width + cx] = dd * map.resolution;
    }
  }
  return df;
}

// Circle cover of the footprint rectangle for fast clearance tests. Clearing
// every circle implies the exact rectangle is clear.
struct CircleCover {
  std::vector<double> centers;  // x offsets in the front-axle frame
  double radius = 0.0;
};

CircleCover make_cover(const Footprint& fp, int k = 5) {
  CircleCover c;
  const double len = fp.x_max - fp.x_min;
  const double seg = len / k;
  c.radius = std::hypot(0.5 * seg, fp.half_width);
  for (int i = 0; i < k; ++i) c.centers.push_back(fp.x_min + (i + 0.5) * seg);
  return c;
}

bool cover_clear(const Pose2D& pose, const CircleCover& cover,
                 const DistanceField& df, double margin) {
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  // Half-cell slack: the field measures to cell centers.
  const double slack = 0.5 * df.resolution * std::sqrt(2.0);
  for (double off : cover.centers) {
    const double x = pose.x + off * c;
    const double y = pose.y + off * s;
    if (df.at(x, y) < cover.radius + margin + slack) return false;
  }
  return true;
}

// Obstacle-aware 2D shortest distance (meters) from every free cell to the
// goal cell, 8-connected. Admissible for the full problem.
std::vector<double> dijkstra_to_goal(const mapping::CostMap& map,
                                     bool unknown_traversable, int gx, int gy) {
  const int n = map.width * map.height;
  std::vector<double> dist(n, kInf);
  using QE = std::pair<double, int>;
  std::priority_queue<QE, std::vector<QE>, std::greater<>> q;
  if (map.in_bounds(gx, gy)) {
    dist[map.index(gx, gy)] = 0.0;
    q.push({0.0, map.index(gx, gy)});
  }
  const double r = map.resolution;
  const double rd = r * std::sqrt(2.0);
  while (!q.empty()) {
    const auto [d, idx] = q.top();
    q.pop();
    if (d > dist[idx]) continue;
    const int cx = idx % map.width, cy = idx / map.width;
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        const int nx = cx + dx, ny = cy + dy;
        if (!map.in_bounds(nx, ny)) continue;
        if (cell_blocked(map, nx, ny, unknown_traversable)) continue;
        const double nd = d + ((dx != 0 && dy != 0) ? rd : r);
        const int nidx = map.index(nx, ny);
        if (nd < dist[nidx]) {
          dist[nidx] = nd;
          q.push({nd, nidx});
        }
      }
    }
  }
  return dist;
}

struct Node {
  Pose2D pose;
  double g = 0.0;
  int parent = -1;
  double curvature = 0.0;  // motion that reached this node
  bool reverse = false;
  bool has_motion = false;
};

struct Key {
  int ix, iy, ib, dir;
  bool operator==(const Key& o) const {
    return ix == o.ix && iy == o.iy && ib == o.ib && dir == o.dir;
  }
};

struct KeyHash {
  size_t operator()(const Key& k) const {
    size_t h = static_cast<size_t>(k.ix) * 73856093u;
    h ^= static_cast<size_t>(k.iy) * 19349663u;
    h ^= static_cast<size_t>(k.ib) * 83492791u;
    h ^= static_cast<size_t>(k.dir) * 2654435761u;
    return h;
  }
};

Pose2D advance_arc(const Pose2D& p, double curvature, double signed_len) {
  if (std::abs(curvature) < 1e-12) {
    return Pose2D(p.x + signed_len * std::cos(p.theta),
                  p.y + signed_len * std::sin(p.theta), p.theta);
  }
  const double dth = curvature * signed_len;
  const double r = 1.0 / curvature;
  return Pose2D(p.x + r * (std::sin(p.theta + dth) - std::sin(p.theta)),
                p.y - r * (std::cos(p.theta + dth) - std::cos(p.theta)),
                p.theta + dth);
}

}  // namespace

bool footprint_collides(const Pose2D& pose, const mapping::CostMap& costmap,
                        const vehicle::VehicleParams& vehicle,
                        bool unknown_traversable, double margin) {
  const Footprint fp = make_footprint(vehicle);
  const double xm = fp.x_min - margin, xM = fp.x_max + margin;
  const double hw = fp.half_width + margin;
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  // Bounding box of the rotated rectangle in world coordinates.
  double corners[4][2];
  const double xs[2] = {xm, xM}, ys[2] = {-hw, hw};
  int ci = 0;
  for (double fx : xs)
    for (double fy : ys) {
      corners[ci][0] = pose.x + fx * c - fy * s;
      corners[ci][1] = pose.y + fx * s + fy * c;
      ++ci;
    }
  double bx0 = corners[0][0], bx1 = corners[0][0];
  double by0 = corners[0][1], by1 = corners[0][1];
  for (int i = 1; i < 4; ++i) {
    bx0 = std::min(bx0, corners[i][0]);
    bx1 = std::max(bx1, corners[i][0]);
    by0 = std::min(by0, corners[i][1]);
    by1 = std::max(by1, corners[i][1]);
  }
  int cx0, cy0, cx1, cy1;
  costmap.world_to_cell(bx0, by0, cx0, cy0);
  costmap.world_to_cell(bx1, by1, cx1, cy1);
  for (int cy = cy0; cy <= cy1; ++cy) {
    for (int cx = cx0; cx <= cx1; ++cx) {
      double wx, wy;
      costmap.cell_to_world(cx, cy, wx, wy);
      // Cell center into the footprint frame.
      const double dx = wx - pose.x, dy = wy - pose.y;
      const double lx = dx * c + dy * s;
      const double ly = -dx * s + dy * c;
      if (lx < xm || lx > xM || ly < -hw || ly > hw) continue;
      if (cell_blocked(costmap, cx, cy, unknown_traversable)) return true;
    }
  }
  return false;
}

std::vector<PathSegment> split_segments(const Path& path) {
  std::vector<PathSegment> out;
  if (path.poses.empty()) return out;
  // Pose 0 carries no incoming motion; it belongs to the first segment.
  int first = 0;
  bool dir = path.poses.size() > 1 ? path.poses[1].reverse
                                   : path.poses[0].reverse;
  for (size_t i = 2; i < path.poses.size(); ++i) {
    if (path.poses[i].reverse != dir) {
      out.push_back({first, static_cast<int>(i - 1), dir});
      first = static_cast<int>(i - 1);  // turning pose shared between segments
      dir = path.poses[i].reverse;
    }
  }
  out.push_back({first, static_cast<int>(path.poses.size() - 1), dir});
  return out;
}

std::vector<int> Path::turning_pose_indices() const {
  std::vector<int> out;
  for (size_t i = 1; i < segments.size(); ++i) out.push_back(segments[i].first);
  return out;
}

double Path::length() const {
  double total = 0.0;
  for (size_t i = 1; i < poses.size(); ++i) {
    total += std::hypot(poses[i].pose.x - poses[i - 1].pose.x,
                        poses[i].pose.y - poses[i - 1].pose.y);
  }
  return total;
}

PlanResult plan(const Pose2D& start, const Pose2D& goal,
                const mapping::CostMap& costmap,
                const vehicle::VehicleParams& vehicle,
                const PlannerParams& params, const CancelToken* cancel) {
  PlanResult result;
  const double kappa_max = params.max_curvature > 0.0
                               ? params.max_curvature
                               : max_curvature(vehicle);
  const double radius = 1.0 / kappa_max;
  const Footprint fp = make_footprint(vehicle);
  const CircleCover cover = make_cover(fp);
  const DistanceField df =
      build_distance_field(costmap, params.unknown_traversable);

  auto strictly_clear = [&](const Pose2D& p) {
    if (cover_clear(p, cover, df, params.footprint_margin)) return true;
    // Conservative cover failed near obstacles; fall back to the exact test.
    return !footprint_collides(p, costmap, vehicle, params.unknown_traversable,
                               params.footprint_margin);
  };

  if (!strictly_clear(goal)) {
    result.status = PlanStatus::StartOrGoalOccupied;
    return result;
  }

  // A vehicle that just docked at a rack or platform starts inside the
  // inflated footprint of that structure. Grant an escape bubble around the
  // start so it can drive back out; everywhere else the strict test applies.
  const bool start_blocked = !strictly_clear(start);
  const double escape_radius = 2.5;
  auto clear = [&](const Pose2D& p) {
    if (strictly_clear(p)) return true;
    return start_blocked &&
           std::hypot(p.x - start.x, p.y - start.y) < escape_radius;
  };

  int goal_cx, goal_cy;
  costmap.world_to_cell(goal.x, goal.y, goal_cx, goal_cy);
  const std::vector<double> h2d =
      dijkstra_to_goal(costmap, params.unknown_traversable, goal_cx, goal_cy);

  auto heuristic = [&](const Pose2D& p) {
    int cx, cy;
    costmap.world_to_cell(p.x, p.y, cx, cy);
    double h = 0.0;
    if (costmap.in_bounds(cx, cy)) h = h2d[costmap.index(cx, cy)];
    const double rs = reeds_shepp_distance(p, goal, radius);
    return std::max(std::isfinite(h) ? h : 0.0, rs);
  };

  auto make_key = [&](const Pose2D& p, bool rev) {
    Key k;
    k.ix = static_cast<int>(std::floor(p.x / params.grid_resolution));
    k.iy = static_cast<int>(std::floor(p.y / params.grid_resolution));
    double a = p.theta;
    if (a < 0) a += 2.0 * kPi;
    k.ib = static_cast<int>(a / (2.0 * kPi) * params.heading_bins) %
           params.heading_bins;
    k.dir = rev ? 1 : 0;
    return k;
  };

  std::vector<Node> nodes;
  std::unordered_map<Key, int, KeyHash> best;  // key -> node index
  struct QE {
    double f;
    std::int64_t id;
    int node;
    bool operator>(const QE& o) const {
      return f != o.f ? f > o.f : id > o.id;
    }
  };
  std::priority_queue<QE, std::vector<QE>, std::greater<>> open;
  std::int64_t next_id = 0;

  nodes.push_back({start, 0.0, -1, 0.0, false, false});
  best[make_key(start, false)] = 0;
  open.push({heuristic(start), next_id++, 0});

  const double curvatures[3] = {0.0, 0.5 * kappa_max, kappa_max};
  const double check_step = params.grid_resolution;

  auto motion_clear = [&](const Pose2D& from, double curv, double slen,
                          Pose2D& end) {
    const int n =
        std::max(1, static_cast<int>(std::ceil(std::abs(slen) / check_step)));
    Pose2D p = from;
    for (int i = 1; i <= n; ++i) {
      p = advance_arc(from, curv, slen * i / n);
      if (!clear(p)) return false;
    }
    end = p;
    return true;
  };

  auto at_goal = [&](const Pose2D& p) {
    return std::hypot(p.x - goal.x, p.y - goal.y) <= params.goal_tol_xy &&
           std::abs(normalize_angle(p.theta - goal.theta)) <=
               params.goal_tol_theta;
  };

  int goal_node = -1;
  std::vector<RsSample> goal_tail;
  double tail_cost = 0.0;

  std::int64_t expansions = 0;
  while (!open.empty()) {
    if (cancel && expansions % 64 == 0 && cancel->load()) break;
    if (expansions >= params.node_budget) break;
    const QE top = open.top();
    open.pop();
    const int ni = top.node;
    const Node cur = nodes[ni];  // copy: nodes vector reallocates below
    const Key ck = make_key(cur.pose, cur.reverse);
    auto it = best.find(ck);
    if (it != best.end() && it->second != ni &&
        nodes[it->second].g < cur.g - 1e-12)
      continue;  // stale entry
    ++expansions;

    if (at_goal(cur.pose)) {
      goal_node = ni;
      break;
    }

    // Periodic analytic expansion toward the goal.
    if (expansions % params.analytic_period == 0) {
      const ReedsSheppPath rs = reeds_shepp(cur.pose, goal, radius);
      if (std::isfinite(rs.total)) {
        const auto samples =
            reeds_shepp_sample(cur.pose, rs, radius, 0.5 * check_step);
        bool ok = !samples.empty();
        for (const auto& s : samples) {
          if (!clear(s.pose)) {
            ok = false;
            break;
          }
        }
        if (ok) {
          goal_node = ni;
          goal_tail = samples;
          tail_cost = 0.0;
          bool prev_rev = cur.has_motion ? cur.reverse : samples.front().reverse;
          double seg = 0.0;
          Pose2D prev = cur.pose;
          for (const auto& s : samples) {
            const double d = std::hypot(s.pose.x - prev.x, s.pose.y - prev.y);
            tail_cost += d * (s.reverse ? params.reverse_penalty : 1.0);
            if (s.reverse != prev_rev) tail_cost += params.switch_penalty;
            prev_rev = s.reverse;
            prev = s.pose;
            seg += d;
          }
          (void)seg;
          break;
        }
      }
    }

    for (int rev = 0; rev < 2; ++rev) {
      for (double cmag : curvatures) {
        for (int csign = (cmag == 0.0 ? 1 : -1); csign <= 1; csign += 2) {
          const double curv = csign * cmag;
          const double slen =
              rev ? -params.primitive_length : params.primitive_length;
          Pose2D end;
          if (!motion_clear(cur.pose, curv, slen, end)) continue;
          double step_cost = params.primitive_length *
                             (rev ? params.reverse_penalty : 1.0);
          if (cur.has_motion && (rev != 0) != cur.reverse)
            step_cost += params.switch_penalty;
          const double g = cur.g + step_cost;
          const Key k = make_key(end, rev != 0);
          auto bit = best.find(k);
          if (bit != best.end() && nodes[bit->second].g <= g + 1e-12) continue;
          nodes.push_back({end, g, ni, curv, rev != 0, true});
          const int idx = static_cast<int>(nodes.size()) - 1;
          best[k] = idx;
          open.push({g + heuristic(end), next_id++, idx});
        }
      }
    }
  }
  result.expansions = expansions;
  if (goal_node < 0) {
    result.status = PlanStatus::NoPathFound;
    return result;
  }

  // Reconstruct: chain of motions from start to goal_node, then the tail.
  std::vector<int> chain;
  for (int i = goal_node; i >= 0; i = nodes[i].parent) chain.push_back(i);
  std::reverse(chain.begin(), chain.end());

  Path& path = result.path;
  path.poses.push_back({nodes[chain[0]].pose, false, 0.0});
  for (size_t i = 1; i < chain.size(); ++i) {
    const Node& n = nodes[chain[i]];
    const Node& p = nodes[chain[i - 1]];
    const double slen =
        n.reverse ? -params.primitive_length : params.primitive_length;
    const int steps = std::max(
        1, static_cast<int>(std::round(params.primitive_length / check_step)));
    for (int s = 1; s <= steps; ++s) {
      const Pose2D q = advance_arc(p.pose, n.curvature, slen * s / steps);
      path.poses.push_back({q, n.reverse, n.curvature});
    }
  }
  for (const auto& s : goal_tail)
    path.poses.push_back({s.pose, s.reverse, s.curvature});
  // Fix the start pose's direction tag to match the first motion.
  if (path.poses.size() > 1) path.poses[0].reverse = path.poses[1].reverse;

  path.cost = nodes[goal_node].g + tail_cost;
  path.segments = split_segments(path);
  result.status = PlanStatus::Ok;
  return result;
}

std::string path_to_csv(const Path& path) {
  std::ostringstream os;
  os << "x,y,theta,direction,curvature\n";
  for (const auto& p : path.poses) {
    os << p.pose.x << ',' << p.pose.y << ',' << p.pose.theta << ','
       << (p.reverse ? -1 : 1) << ',' << p.curvature << '\n';
  }
  return os.str();
}

}  // namespace forksim::planning
