#include "forksim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "forksim/estimation.hpp"
#include "forksim/planner.hpp"
#include <json.hpp>

namespace forksim::harness {

namespace {

using nlohmann::json;

// Collects errors with dotted field paths while walking the document.
struct Reader {
  std::vector<ConfigError>& errors;

  void error(const std::string& field, const std::string& message) {
    errors.push_back({field, message});
  }

  bool require_object(const json& j, const std::string& path) {
    if (j.is_object()) return true;
    error(path, "expected an object");
    return false;
  }

  // Rejects keys outside the allowed set so typos do not silently turn into
  // defaults.
  void check_keys(const json& j, const std::string& path,
                  const std::set<std::string>& allowed) {
    if (!j.is_object()) return;
    for (const auto& [key, value] : j.items()) {
      (void)value;
      if (!allowed.count(key)) error(path + "." + key, "unknown field");
    }
  }

  template <typename T>
  bool read(const json& j, const std::string& parent, const char* key, T& out,
            bool required = false) {
    const std::string path = parent.empty() ? key : parent + "." + key;
    if (!j.contains(key)) {
      if (required) error(path, "missing required field");
      return false;
    }
    try {
      out = j.at(key).get<T>();
      return true;
    } catch (const json::exception&) {
      error(path, "wrong type");
      return false;
    }
  }

  bool read_pose(const json& j, const std::string& path, Pose2D& out) {
    if (!j.is_array() || j.size() != 3 || !j[0].is_number() ||
        !j[1].is_number() || !j[2].is_number()) {
      error(path, "expected [x, y, theta]");
      return false;
    }
    out = Pose2D{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    return true;
  }

  bool read_vec2(const json& j, const std::string& path, Vec2& out) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() ||
        !j[1].is_number()) {
      error(path, "expected [x, y]");
      return false;
    }
    out = Vec2{j[0].get<double>(), j[1].get<double>()};
    return true;
  }
};

void parse_world(Reader& r, const json& jw, WorldSpec& world) {
  if (!r.require_object(jw, "world")) return;
  r.check_keys(jw, "world",
               {"bounds", "zones", "pallets", "random_pallets", "truck",
                "obstacles"});

  if (jw.contains("bounds")) {
    const json& jb = jw.at("bounds");
    if (r.require_object(jb, "world.bounds")) {
      r.check_keys(jb, "world.bounds", {"x_min", "y_min", "x_max", "y_max"});
      r.read(jb, "world.bounds", "x_min", world.x_min, true);
      r.read(jb, "world.bounds", "y_min", world.y_min, true);
      r.read(jb, "world.bounds", "x_max", world.x_max, true);
      r.read(jb, "world.bounds", "y_max", world.y_max, true);
    }
  }

  if (jw.contains("zones")) {
    const json& jz = jw.at("zones");
    if (!jz.is_array()) {
      r.error("world.zones", "expected an array");
    } else {
      for (size_t i = 0; i < jz.size(); ++i) {
        const std::string path = "world.zones[" + std::to_string(i) + "]";
        const json& z = jz[i];
        if (!r.require_object(z, path)) continue;
        r.check_keys(z, path, {"name", "polygon"});
        ZoneSpec zone;
        r.read(z, path, "name", zone.name, true);
        if (z.contains("polygon") && z.at("polygon").is_array()) {
          for (size_t k = 0; k < z.at("polygon").size(); ++k) {
            Vec2 p;
            if (r.read_vec2(z.at("polygon")[k],
                            path + ".polygon[" + std::to_string(k) + "]", p))
              zone.polygon.push_back(p);
          }
        } else {
          r.error(path + ".polygon", "missing polygon");
        }
        world.zones.push_back(std::move(zone));
      }
    }
  }

  if (jw.contains("pallets")) {
    const json& jp = jw.at("pallets");
    if (!jp.is_array()) {
      r.error("world.pallets", "expected an array");
    } else {
      for (size_t i = 0; i < jp.size(); ++i) {
        const std::string path = "world.pallets[" + std::to_string(i) + "]";
        const json& p = jp[i];
        if (!r.require_object(p, path)) continue;
        r.check_keys(p, path, {"id", "x", "y", "theta", "z", "mass_kg"});
        PalletSpec ps;
        r.read(p, path, "id", ps.id, true);
        r.read(p, path, "x", ps.pose.x, true);
        r.read(p, path, "y", ps.pose.y, true);
        r.read(p, path, "theta", ps.pose.theta, true);
        r.read(p, path, "z", ps.z);
        r.read(p, path, "mass_kg", ps.mass_kg);
        world.pallets.push_back(ps);
      }
    }
  }

  if (jw.contains("random_pallets")) {
    const json& jr = jw.at("random_pallets");
    if (r.require_object(jr, "world.random_pallets")) {
      r.check_keys(jr, "world.random_pallets", {"zone", "count", "mass_kg"});
      RandomPalletSpec rp;
      r.read(jr, "world.random_pallets", "zone", rp.zone, true);
      r.read(jr, "world.random_pallets", "count", rp.count, true);
      r.read(jr, "world.random_pallets", "mass_kg", rp.mass_kg);
      world.random_pallets = rp;
    }
  }

  if (jw.contains("truck")) {
    const json& jt = jw.at("truck");
    if (r.require_object(jt, "world.truck")) {
      r.check_keys(jt, "world.truck",
                   {"present", "x", "y", "theta", "deck_height", "deck_length",
                    "deck_width", "slot_pattern"});
      TruckSpec& t = world.truck;
      r.read(jt, "world.truck", "present", t.present);
      r.read(jt, "world.truck", "x", t.pose.x);
      r.read(jt, "world.truck", "y", t.pose.y);
      r.read(jt, "world.truck", "theta", t.pose.theta);
      r.read(jt, "world.truck", "deck_height", t.deck_height);
      r.read(jt, "world.truck", "deck_length", t.deck_length);
      r.read(jt, "world.truck", "deck_width", t.deck_width);
      if (jt.contains("slot_pattern")) {
        const json& js = jt.at("slot_pattern");
        if (!js.is_array()) {
          r.error("world.truck.slot_pattern", "expected an array");
        } else {
          for (size_t i = 0; i < js.size(); ++i) {
            const std::string path =
                "world.truck.slot_pattern[" + std::to_string(i) + "]";
            if (!r.require_object(js[i], path)) continue;
            r.check_keys(js[i], path, {"along", "depth"});
            perception::SlotOffset so;
            r.read(js[i], path, "along", so.along, true);
            r.read(js[i], path, "depth", so.depth, true);
            t.slot_pattern.push_back(so);
          }
        }
      }
    }
  }

  if (jw.contains("obstacles")) {
    const json& jo = jw.at("obstacles");
    if (!jo.is_array()) {
      r.error("world.obstacles", "expected an array");
    } else {
      for (size_t i = 0; i < jo.size(); ++i) {
        const std::string path = "world.obstacles[" + std::to_string(i) + "]";
        const json& o = jo[i];
        if (!r.require_object(o, path)) continue;
        r.check_keys(o, path,
                     {"x", "y", "hx", "hy", "height", "vx", "vy"});
        ObstacleSpec os;
        r.read(o, path, "x", os.center.x, true);
        r.read(o, path, "y", os.center.y, true);
        r.read(o, path, "hx", os.half_extents.x);
        r.read(o, path, "hy", os.half_extents.y);
        r.read(o, path, "height", os.height);
        r.read(o, path, "vx", os.velocity.x);
        r.read(o, path, "vy", os.velocity.y);
        world.obstacles.push_back(os);
      }
    }
  }
}

void parse_mission(Reader& r, const json& jm, ScenarioConfig& cfg) {
  if (!r.require_object(jm, "mission")) return;
  r.check_keys(jm, "mission",
               {"mode", "pallet_count", "home", "observe", "ground_slots"});
  std::string mode;
  if (r.read(jm, "mission", "mode", mode, true)) {
    if (mode == "G2G")
      cfg.mission.mode = tasking::MissionSpec::Mode::GroundToGround;
    else if (mode == "G2T")
      cfg.mission.mode = tasking::MissionSpec::Mode::GroundToTruck;
    else if (mode == "T2G")
      cfg.mission.mode = tasking::MissionSpec::Mode::TruckToGround;
    else
      r.error("mission.mode", "expected one of G2G, G2T, T2G");
  }
  r.read(jm, "mission", "pallet_count", cfg.mission.pallet_count);
  if (jm.contains("home"))
    r.read_pose(jm.at("home"), "mission.home", cfg.mission.home);
  else
    r.error("mission.home", "missing required field");
  if (jm.contains("observe"))
    r.read_pose(jm.at("observe"), "mission.observe", cfg.mission.observe_pose);
  else
    r.error("mission.observe", "missing required field");
  if (jm.contains("ground_slots")) {
    const json& js = jm.at("ground_slots");
    if (!js.is_array()) {
      r.error("mission.ground_slots", "expected an array");
    } else {
      for (size_t i = 0; i < js.size(); ++i) {
        Pose2D p;
        if (r.read_pose(js[i],
                        "mission.ground_slots[" + std::to_string(i) + "]", p))
          cfg.mission.ground_slots.push_back(p);
      }
    }
  }
}

// Proper segment intersection test for the zone disjointness check.
bool segments_intersect(const Vec2& a, const Vec2& b, const Vec2& c,
                        const Vec2& d) {
  const auto cross = [](const Vec2& o, const Vec2& p, const Vec2& q) {
    return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x);
  };
  const double d1 = cross(c, d, a);
  const double d2 = cross(c, d, b);
  const double d3 = cross(a, b, c);
  const double d4 = cross(a, b, d);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

bool zones_overlap(const ZoneSpec& a, const ZoneSpec& b) {
  for (const Vec2& p : a.polygon)
    if (estimation::point_in_polygon(p, b.polygon)) return true;
  for (const Vec2& p : b.polygon)
    if (estimation::point_in_polygon(p, a.polygon)) return true;
  for (size_t i = 0; i < a.polygon.size(); ++i) {
    const Vec2& a0 = a.polygon[i];
    const Vec2& a1 = a.polygon[(i + 1) % a.polygon.size()];
    for (size_t j = 0; j < b.polygon.size(); ++j) {
      const Vec2& b0 = b.polygon[j];
      const Vec2& b1 = b.polygon[(j + 1) % b.polygon.size()];
      if (segments_intersect(a0, a1, b0, b1)) return true;
    }
  }
  return false;
}

void rasterize_rect(mapping::CostMap& cm, const Pose2D& center,
                    double half_len, double half_wid, double inflate) {
  const double hx = half_len + inflate;
  const double hy = half_wid + inflate;
  const double reach = std::hypot(hx, hy);
  int cx0, cy0, cx1, cy1;
  cm.world_to_cell(center.x - reach, center.y - reach, cx0, cy0);
  cm.world_to_cell(center.x + reach, center.y + reach, cx1, cy1);
  for (int cy = cy0; cy <= cy1; ++cy) {
    for (int cx = cx0; cx <= cx1; ++cx) {
      if (!cm.in_bounds(cx, cy)) continue;
      double x, y;
      cm.cell_to_world(cx, cy, x, y);
      const Vec2 local = center.inverse_transform({x, y});
      if (std::abs(local.x) <= hx && std::abs(local.y) <= hy) {
        cm.state[cm.index(cx, cy)] = mapping::OccState::Occupied;
        cm.cost[cm.index(cx, cy)] = 1.0;
      }
    }
  }
}

bool pose_in_bounds(const WorldSpec& w, const Pose2D& p) {
  return p.x >= w.x_min && p.x <= w.x_max && p.y >= w.y_min && p.y <= w.y_max;
}

bool pallet_accessible(const ScenarioConfig& cfg, const mapping::CostMap& cm,
                       const Pose2D& pallet_pose) {
  const tasking::TaskingParams params;
  const Pose2D pre =
      tasking::pre_approach_pose(pallet_pose, params.pre_approach_distance);
  if (!pose_in_bounds(cfg.world, pre)) return false;
  return !planning::footprint_collides(pre, cm, params.vp, false, 0.05);
}

}  // namespace

bool point_in_zone(const ZoneSpec& zone, const Vec2& p) {
  return estimation::point_in_polygon(p, zone.polygon);
}

LoadResult parse_scenario(const std::string& json_text) {
  LoadResult result;
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    result.errors.push_back({"", std::string("parse error: ") + e.what()});
    return result;
  }

  ScenarioConfig cfg;
  Reader r{result.errors};
  if (!r.require_object(doc, "")) return result;
  r.check_keys(doc, "$",
               {"version", "seed", "dt", "time_limit", "noise", "world",
                "mission", "pickup_zone", "scripts"});

  r.read(doc, "", "version", cfg.version, true);
  r.read(doc, "", "seed", cfg.seed);
  r.read(doc, "", "dt", cfg.dt);
  r.read(doc, "", "time_limit", cfg.time_limit);
  r.read(doc, "", "noise", cfg.noise);
  r.read(doc, "", "pickup_zone", cfg.pickup_zone);

  if (doc.contains("world"))
    parse_world(r, doc.at("world"), cfg.world);
  else
    r.error("world", "missing required field");
  if (doc.contains("mission"))
    parse_mission(r, doc.at("mission"), cfg);
  else
    r.error("mission", "missing required field");
  if (doc.contains("scripts")) {
    const json& js = doc.at("scripts");
    if (r.require_object(js, "scripts")) {
      r.check_keys(js, "scripts", {"clearance_delay"});
      r.read(js, "scripts", "clearance_delay", cfg.clearance_delay);
    }
  }

  if (result.errors.empty()) result.config = std::move(cfg);
  return result;
}

LoadResult load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    LoadResult result;
    result.errors.push_back({"", "cannot open file: " + path});
    return result;
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

std::vector<ConfigError> validate_scenario(const ScenarioConfig& cfg) {
  std::vector<ConfigError> errors;
  const auto error = [&](const std::string& field, const std::string& msg) {
    errors.push_back({field, msg});
  };

  if (cfg.version != kScenarioVersion)
    error("version", "unsupported version " + std::to_string(cfg.version) +
                         ", expected " + std::to_string(kScenarioVersion));
  if (cfg.dt <= 0.0 || cfg.dt > 0.1) error("dt", "must be in (0, 0.1]");
  if (cfg.time_limit <= 0.0) error("time_limit", "must be positive");
  if (cfg.noise != "none" && cfg.noise != "calibrated")
    error("noise", "unknown profile '" + cfg.noise + "'");
  if (cfg.world.x_max <= cfg.world.x_min || cfg.world.y_max <= cfg.world.y_min)
    error("world.bounds", "empty extent");

  for (size_t i = 0; i < cfg.world.zones.size(); ++i) {
    const ZoneSpec& z = cfg.world.zones[i];
    const std::string path = "world.zones[" + std::to_string(i) + "]";
    if (z.polygon.size() < 3) error(path + ".polygon", "needs >= 3 vertices");
    for (size_t j = i + 1; j < cfg.world.zones.size(); ++j) {
      if (z.polygon.size() >= 3 && cfg.world.zones[j].polygon.size() >= 3 &&
          zones_overlap(z, cfg.world.zones[j]))
        error(path, "overlaps zone '" + cfg.world.zones[j].name + "'");
    }
  }

  bool pickup_found = false;
  for (const ZoneSpec& z : cfg.world.zones)
    if (z.name == cfg.pickup_zone) pickup_found = true;
  if (!pickup_found && !cfg.world.zones.empty())
    error("pickup_zone", "no zone named '" + cfg.pickup_zone + "'");

  if (cfg.world.random_pallets) {
    bool found = false;
    for (const ZoneSpec& z : cfg.world.zones)
      if (z.name == cfg.world.random_pallets->zone) found = true;
    if (!found)
      error("world.random_pallets.zone",
            "no zone named '" + cfg.world.random_pallets->zone + "'");
    if (cfg.world.random_pallets->count <= 0)
      error("world.random_pallets.count", "must be positive");
  }

  std::set<int> ids;
  const mapping::CostMap cm = static_costmap(cfg);
  for (size_t i = 0; i < cfg.world.pallets.size(); ++i) {
    const PalletSpec& p = cfg.world.pallets[i];
    const std::string path = "world.pallets[" + std::to_string(i) + "]";
    if (!ids.insert(p.id).second) error(path + ".id", "duplicate pallet id");
    if (!pose_in_bounds(cfg.world, p.pose))
      error(path, "outside world bounds");
    else if (!pallet_accessible(cfg, cm, p.pose))
      error(path, "not accessible: approach pose blocked or out of bounds");
  }

  const bool needs_truck =
      cfg.mission.mode != tasking::MissionSpec::Mode::GroundToGround;
  if (needs_truck && !cfg.world.truck.present)
    error("world.truck.present", "mission mode requires a truck");
  if (cfg.mission.mode == tasking::MissionSpec::Mode::GroundToTruck &&
      cfg.world.truck.slot_pattern.empty())
    error("world.truck.slot_pattern", "ground-to-truck needs target slots");

  if (!pose_in_bounds(cfg.world, cfg.mission.home))
    error("mission.home", "outside world bounds");
  if (!pose_in_bounds(cfg.world, cfg.mission.observe_pose))
    error("mission.observe", "outside world bounds");
  for (size_t i = 0; i < cfg.mission.ground_slots.size(); ++i)
    if (!pose_in_bounds(cfg.world, cfg.mission.ground_slots[i]))
      error("mission.ground_slots[" + std::to_string(i) + "]",
            "outside world bounds");
  const bool needs_ground_slots =
      cfg.mission.mode != tasking::MissionSpec::Mode::GroundToTruck;
  if (needs_ground_slots && cfg.mission.ground_slots.empty())
    error("mission.ground_slots", "mission mode requires ground slots");

  if (cfg.clearance_delay < 0.0) error("scripts.clearance_delay",
                                       "must be non-negative");
  return errors;
}

std::vector<ConfigError> materialize_pallets(ScenarioConfig& cfg) {
  std::vector<ConfigError> errors;
  if (!cfg.world.random_pallets) return errors;
  const RandomPalletSpec req = *cfg.world.random_pallets;

  const ZoneSpec* zone = nullptr;
  for (const ZoneSpec& z : cfg.world.zones)
    if (z.name == req.zone) zone = &z;
  if (!zone) {
    errors.push_back({"world.random_pallets.zone",
                      "no zone named '" + req.zone + "'"});
    return errors;
  }

  double zx0 = 1e18, zy0 = 1e18, zx1 = -1e18, zy1 = -1e18;
  for (const Vec2& p : zone->polygon) {
    zx0 = std::min(zx0, p.x);
    zy0 = std::min(zy0, p.y);
    zx1 = std::max(zx1, p.x);
    zy1 = std::max(zy1, p.y);
  }

  const mapping::CostMap cm = static_costmap(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> ux(zx0, zx1), uy(zy0, zy1);
  std::uniform_real_distribution<double> uth(-0.35, 0.35);

  int next_id = 1;
  for (const PalletSpec& p : cfg.world.pallets)
    next_id = std::max(next_id, p.id + 1);

  const double spacing = 2.4;  // room for the docking corridor between faces
  for (int n = 0; n < req.count; ++n) {
    bool placed = false;
    for (int attempt = 0; attempt < 2000 && !placed; ++attempt) {
      PalletSpec cand;
      cand.id = next_id;
      cand.mass_kg = req.mass_kg;
      cand.pose = Pose2D{ux(rng), uy(rng), uth(rng)};
      if (!point_in_zone(*zone, cand.pose.position())) continue;
      bool clear = true;
      for (const PalletSpec& other : cfg.world.pallets)
        if ((other.pose.position() - cand.pose.position()).norm() < spacing)
          clear = false;
      if (!clear) continue;
      if (!pallet_accessible(cfg, cm, cand.pose)) continue;
      cfg.world.pallets.push_back(cand);
      next_id += 1;
      placed = true;
    }
    if (!placed) {
      errors.push_back({"world.random_pallets",
                        "could not place pallet " + std::to_string(n + 1) +
                            " of " + std::to_string(req.count) +
                            " accessibly in zone '" + req.zone + "'"});
      return errors;
    }
  }
  cfg.world.random_pallets.reset();
  return errors;
}

world::NoiseProfile noise_profile(const std::string& name) {
  if (name == "calibrated") {
    world::NoiseProfile np;
    np.odom_v_sigma = 0.02;
    np.odom_gamma_sigma = 0.005;
    np.gnss_xy_sigma = 0.05;
    np.gnss_heading_sigma = 0.01;
    np.pressure_sigma = 0.3;
    np.lidar_range_sigma = 0.01;
    np.detection.enabled = true;
    return np;
  }
  world::NoiseProfile np = world::NoiseProfile::none();
  np.detection.enabled = false;
  return np;
}

mapping::CostMap static_costmap(const ScenarioConfig& cfg,
                                double resolution) {
  const WorldSpec& w = cfg.world;
  mapping::CostMap cm;
  cm.resolution = resolution;
  cm.origin_x = w.x_min - 1.0;
  cm.origin_y = w.y_min - 1.0;
  cm.width = static_cast<int>(std::ceil((w.x_max - w.x_min + 2.0) / resolution));
  cm.height =
      static_cast<int>(std::ceil((w.y_max - w.y_min + 2.0) / resolution));
  cm.state.assign(static_cast<size_t>(cm.width) * cm.height,
                  mapping::OccState::Free);
  cm.cost.assign(static_cast<size_t>(cm.width) * cm.height, 0.0);

  // Boundary walls.
  for (int cy = 0; cy < cm.height; ++cy) {
    for (int cx = 0; cx < cm.width; ++cx) {
      double x, y;
      cm.cell_to_world(cx, cy, x, y);
      if (x < w.x_min || x > w.x_max || y < w.y_min || y > w.y_max) {
        cm.state[cm.index(cx, cy)] = mapping::OccState::Occupied;
        cm.cost[cm.index(cx, cy)] = 1.0;
      }
    }
  }

  if (w.truck.present)
    rasterize_rect(cm, w.truck.pose, w.truck.deck_length / 2.0,
                   w.truck.deck_width / 2.0, 0.2);

  for (const ObstacleSpec& o : w.obstacles) {
    const bool stationary = o.velocity.norm() < 1e-9;
    if (!stationary) continue;  // the online tracker owns moving obstacles
    rasterize_rect(cm, Pose2D{o.center.x, o.center.y, 0.0}, o.half_extents.x,
                   o.half_extents.y, 0.2);
  }
  return cm;
}

}  // namespace forksim::harness
