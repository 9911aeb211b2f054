#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "forksim/geometry.hpp"
#include "forksim/mapping.hpp"
#include "forksim/mission.hpp"
#include "forksim/perception.hpp"
#include "forksim/world.hpp"

namespace forksim::harness {

inline constexpr int kScenarioVersion = 1;

struct ZoneSpec {
  std::string name;
  std::vector<Vec2> polygon;  // counter-clockwise, >= 3 vertices
};

struct PalletSpec {
  int id = 0;
  Pose2D pose;  // front-face origin, +x out along the insertion direction
  double z = 0.0;
  double mass_kg = 150.0;
};

// Seeded placement of `count` pallets inside the named zone, mutually spaced
// and accessible.
struct RandomPalletSpec {
  std::string zone;
  int count = 0;
  double mass_kg = 150.0;
};

// Obstacles move at constant velocity from t = 0; scripted crossings are
// staged by the starting position (distance / speed sets the arrival time).
struct ObstacleSpec {
  Vec2 center;
  Vec2 half_extents{0.3, 0.3};
  double height = 1.7;
  Vec2 velocity;  // world frame
};

struct TruckSpec {
  bool present = false;
  Pose2D pose;  // deck center, +x out of the loading edge
  double deck_height = 1.1;
  double deck_length = 6.0;
  double deck_width = 2.4;
  std::vector<perception::SlotOffset> slot_pattern;
};

struct WorldSpec {
  double x_min = -20.0, y_min = -10.0, x_max = 20.0, y_max = 10.0;
  std::vector<ZoneSpec> zones;
  std::vector<PalletSpec> pallets;
  std::optional<RandomPalletSpec> random_pallets;
  TruckSpec truck;
  std::vector<ObstacleSpec> obstacles;
};

struct ScenarioConfig {
  int version = kScenarioVersion;
  std::uint64_t seed = 1;
  double dt = 0.01;
  double time_limit = 600.0;
  std::string noise = "none";  // "none" | "calibrated"
  WorldSpec world;
  tasking::MissionSpec mission;
  std::string pickup_zone = "pickup";  // zone gating pallet candidates
  double clearance_delay = 4.0;  // worker confirmation after a hold [s]
};

struct ConfigError {
  std::string field;  // dotted path, e.g. "world.pallets[2].x"
  std::string message;
};

struct LoadResult {
  std::optional<ScenarioConfig> config;
  std::vector<ConfigError> errors;
  bool ok() const { return config.has_value() && errors.empty(); }
};

// Parse + structural validation. Unknown fields are rejected so typos do not
// silently fall back to defaults.
LoadResult parse_scenario(const std::string& json_text);
LoadResult load_scenario_file(const std::string& path);

// Semantic validation: version, zone disjointness, pallets accessible from
// open floor, mission poses inside bounds.
std::vector<ConfigError> validate_scenario(const ScenarioConfig& cfg);

// Expands random_pallets into concrete PalletSpec entries (seeded, spaced,
// accessible) and clears the request. No-op when none are requested.
std::vector<ConfigError> materialize_pallets(ScenarioConfig& cfg);

// Named noise profiles for the simulator.
world::NoiseProfile noise_profile(const std::string& name);

// Static occupancy from the configured geometry: bounds walls, truck body,
// stationary obstacles. Dynamic obstacles stay out; the online tracker owns
// them.
mapping::CostMap static_costmap(const ScenarioConfig& cfg,
                                double resolution = 0.1);

bool point_in_zone(const ZoneSpec& zone, const Vec2& p);

}  // namespace forksim::harness
