#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "forksim/behavior_tree.hpp"
#include "forksim/control.hpp"
#include "forksim/manipulation.hpp"
#include "forksim/mapping.hpp"
#include "forksim/perception.hpp"
#include "forksim/planner.hpp"

namespace forksim::tasking {

enum class InterventionKind { CollisionDetection, Manipulation, Navigation };
enum class InterventionSeverity { Worker, Operator, Engineer };

struct Intervention {
  double time = 0.0;
  InterventionKind kind = InterventionKind::Navigation;
  InterventionSeverity severity = InterventionSeverity::Operator;
  double duration = 0.0;
  std::string note;
};

const char* to_string(InterventionKind k);
const char* to_string(InterventionSeverity s);

struct PalletCandidate {
  int id = -1;
  Pose2D pose;  // front-face origin, +x out along the insertion axis
  double z = 0.0;
};

struct MissionSpec {
  enum class Mode { GroundToGround, GroundToTruck, TruckToGround };
  Mode mode = Mode::GroundToGround;
  int pallet_count = -1;  // -1: transport all available pallets
  Pose2D home;
  Pose2D observe_pose;  // stop-and-observe post facing the loading zone
  std::vector<Pose2D> ground_slots;
  double ground_slot_z = 0.0;
};

// Mission drives happen on open floor where a wide forward loop is almost
// always available and tracks far better than a back-and-forth shuffle, so
// direction changes are priced steeply.
inline planning::PlannerParams navigation_planner() {
  planning::PlannerParams p;
  p.reverse_penalty = 2.0;
  p.switch_penalty = 8.0;
  return p;
}

struct TaskingParams {
  vehicle::VehicleParams vp;
  control::PtcGains gains;
  planning::PlannerParams planner = navigation_planner();
  manipulation::PickParams pick;
  manipulation::PlaceParams place;
  // Front axle to the target face. The forks reach well ahead of the front
  // axle, so this must leave enough straight runway for the tips to settle
  // into the pockets before contact.
  double pre_approach_distance = 7.0;
  int n_retry = 2;
  double loaded_pressure_min = 35.0;  // lift pressure proving a load is on
  double goal_pos_tol = 0.20;
  double recovery_speed = 0.4;
};

// Estimation/perception snapshot refreshed by the harness; the mission only
// reads it. Single writer per tick.
struct Blackboard {
  double time = 0.0;
  vehicle::VehicleState state;  // current estimate
  double vehicle_z = 0.0;
  double p_l = 0.0;
  bool insertion_signal = false;
  mapping::CostMap costmap;
  std::vector<PalletCandidate> confirmed_pallets;
  bool track_set_stable = false;
  std::vector<perception::Slot> truck_slots;
  bool collision_warning = false;
  bool operator_clear = false;  // scripted confirmation button
};

struct SelectionResult {
  int id = -1;
  double path_length = 0.0;
};

// Accessibility-aware pallet selection: candidates whose pre-approach pose
// is reachable by the planner, minimal approach path length, lowest id on
// ties.
std::optional<SelectionResult> select_pallet(
    const std::vector<PalletCandidate>& candidates, const Pose2D& vehicle,
    const mapping::CostMap& costmap, const TaskingParams& params);

// Front-axle pose from which the reverse approach onto the target starts.
Pose2D pre_approach_pose(const Pose2D& target, double distance);

// Mission executor: the transport behavior tree plus the non-blocking
// activities its leaves drive (path tracking, pick, place, recovery,
// collision hold).
class Mission {
 public:
  Mission(MissionSpec spec, TaskingParams params);

  // Mission-rate tick: advances the behavior tree one step.
  BtStatus tick(const Blackboard& bb);
  // Control-rate step: inner-loop setpoints for the active activity.
  control::InnerLoopSetpoints control_step(const Blackboard& bb, double dt);

  BtStatus status() const { return status_; }
  const std::vector<Intervention>& interventions() const {
    return interventions_;
  }
  const std::vector<std::pair<double, std::string>>& phase_log() const {
    return phase_log_;
  }
  const std::string& active_phase() const { return phase_; }
  int completed_cycles() const { return completed_; }
  int pick_attempts() const { return attempts_; }
  // Cumulative over the whole run, not reset per cycle.
  int total_pick_attempts() const { return total_attempts_; }
  bool collision_held() const { return holding_; }
  // Path currently being tracked, null outside drive activities.
  const planning::Path* active_path() const {
    return activity_ == Activity::Drive && !drive_done_ && !drive_failed_
               ? &path_
               : nullptr;
  }
  // Slot targeted by the most recent unload, for occupancy bookkeeping.
  const Pose2D& active_slot() const { return slot_pose_; }

 private:
  enum class Activity { None, Drive, Dwell, Pick, Place, Recover };

  void build_tree();
  void set_phase(const std::string& phase);
  void log_intervention(InterventionKind kind, InterventionSeverity severity,
                        double duration, const std::string& note);
  // tol <= 0 uses the default goal tolerance; park-only goals pass a looser
  // one since nothing docks there.
  bool start_drive(const Pose2D& goal, double tol = 0.0);
  BtStatus drive_status() const;
  BtStatus tick_find();
  BtStatus tick_select();
  BtStatus tick_approach_pallet();
  BtStatus tick_load();
  BtStatus tick_approach_slot();
  BtStatus tick_unload();
  BtStatus tick_return_home();

  MissionSpec spec_;
  TaskingParams params_;
  BtNode::Ptr tree_;
  const Blackboard* bb_ = nullptr;
  BtStatus status_ = BtStatus::Running;
  bool fatal_ = false;

  Activity activity_ = Activity::None;
  // drive
  planning::Path path_;
  size_t segment_ = 0;
  // Segment whose standstill pre-steer already ran (or was skipped).
  size_t steered_segment_ = static_cast<size_t>(-1);
  Pose2D drive_goal_;
  double drive_tol_ = 0.2;
  int replans_ = 0;
  bool drive_done_ = false;
  bool drive_failed_ = false;
  // manipulation
  std::optional<manipulation::PickProcedure> pick_;
  std::optional<manipulation::PlaceProcedure> place_;
  PalletCandidate selected_;
  Pose2D slot_pose_;
  double slot_z_ = 0.0;
  bool recover_done_ = false;
  int attempts_ = 0;
  int total_attempts_ = 0;
  double nominal_pressure_ = 55.0;
  int completed_ = 0;
  // collision hold
  bool holding_ = false;
  double hold_start_ = 0.0;

  std::string phase_;
  std::vector<std::pair<double, std::string>> phase_log_;
  std::vector<Intervention> interventions_;
};

}  // namespace forksim::tasking
