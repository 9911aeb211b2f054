#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "forksim/mission.hpp"
#include "forksim/planner.hpp"
#include "forksim/scenario.hpp"

namespace forksim::harness {

inline constexpr int kLogVersion = 1;
// Below this ground speed a control step counts as standstill.
inline constexpr double kStandstillSpeed = 0.02;

struct TrajectoryRow {
  double t = 0.0;
  // ground truth
  double x = 0.0, y = 0.0, theta = 0.0;
  double gamma = 0.0, v = 0.0, lift = 0.0, shift = 0.0;
  int carried = -1;  // pallet id, -1 when unloaded
  // estimator output
  double est_x = 0.0, est_y = 0.0, est_theta = 0.0;
};

struct ControlRow {
  double t = 0.0;
  double v_d = 0.0, gamma_rate_d = 0.0, lift_d = 0.0, shift_d = 0.0,
         tilt_d = 0.0;
  double u_v = 0.0, u_gamma = 0.0, u_lift = 0.0, u_shift = 0.0, u_tilt = 0.0;
};

struct PhaseRow {
  double t = 0.0;
  std::string phase;
};

struct PlannedPath {
  int id = 0;
  double t = 0.0;
  planning::Path path;
};

// Complete record of one run; everything metrics need and everything replay
// renders comes from here or from its serialized form.
struct RunLogs {
  int version = kLogVersion;
  std::string mode;  // G2G | G2T | T2G
  std::uint64_t seed = 1;
  double dt = 0.01;
  double end_time = 0.0;
  std::string status;  // Success | Failure | Running (timeout)
  bool timed_out = false;
  int cycles_completed = 0;
  int pick_attempts = 0;

  std::vector<TrajectoryRow> trajectory;  // one row per control step
  std::vector<ControlRow> control;
  std::vector<PhaseRow> phases;  // phase entry events
  std::vector<tasking::Intervention> interventions;
  std::vector<PlannedPath> plans;
};

struct CycleMetrics {
  int index = 0;
  double start = 0.0, end = 0.0;
  double cycle_time = 0.0;
  double driving = 0.0, standstill = 0.0;
  double distance = 0.0;
  // ordered (phase name, seconds); the entries partition cycle_time
  std::vector<std::pair<std::string, double>> submissions;
};

struct InterventionCount {
  std::string kind;
  std::string severity;
  int count = 0;
};

struct MetricsReport {
  int version = kLogVersion;
  std::string mode;
  std::uint64_t seed = 1;
  bool success = false;
  bool timed_out = false;
  int cycles_completed = 0;
  int pick_attempts = 0;
  double total_time = 0.0;
  double driving_time = 0.0;
  double standstill_time = 0.0;
  double distance = 0.0;
  std::vector<CycleMetrics> cycles;
  std::vector<std::pair<std::string, double>> submission_totals;
  std::vector<tasking::Intervention> interventions;
  std::vector<InterventionCount> intervention_counts;  // kind x severity
};

// Aggregates the logs into the report. Throws std::runtime_error on gaps in
// the trajectory timeline: metrics are computed, never estimated.
MetricsReport compute_metrics(const RunLogs& logs);

// Deterministic serialization (fixed field order and float formatting), so
// equal runs produce byte-identical reports.
std::string metrics_to_json(const MetricsReport& report);

struct RunResult {
  tasking::BtStatus status = tasking::BtStatus::Running;
  bool timed_out = false;
  RunLogs logs;
  MetricsReport metrics;
  mapping::CostMap costmap;
};

// Closed-loop scenario run: builds the world from the config, wires the
// estimator, synthetic perception, and the mission executor, and steps to
// completion or the time limit. Deterministic per (config, seed). Throws
// std::invalid_argument on an invalid config.
RunResult run_scenario(const ScenarioConfig& cfg);

// Writes metrics.json, trajectory.csv, control.csv, phases.csv,
// interventions.jsonl, plans.csv, and maps/static.grid under out_dir
// (created if needed). Throws std::runtime_error on I/O failure.
void write_artifacts(const RunResult& result, const std::string& out_dir);

// Reads a run directory back and emits plot data: overlay.csv with planned
// and driven rows (segment boundaries marked) and timings.csv with the
// per-submission table. Returns false and sets `error` on missing or
// version-mismatched logs.
bool replay_run(const std::string& in_dir, const std::string& out_dir,
                std::string& error);

}  // namespace forksim::harness
