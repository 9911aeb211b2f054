#pragma once

#include <string>
#include <vector>

#include "forksim/control.hpp"
#include "forksim/vehicle_model.hpp"

namespace forksim::manipulation {

// Pressure-based fork contact detection. Thresholds sit below the nominal
// loaded pressure; a sustained drop into the critical band or a single
// sample below the hard threshold flags contact.
struct ForkContactState {
  double p_pc = 44.0;   // possible-contact threshold
  double p_c = 30.25;   // definite-contact threshold, p_c < p_pc
  int crit_tout = 5;    // consecutive critical samples before contact
  int crit_cnt = 0;
  bool f_pc = false;
  bool f_c = false;
};

// Thresholds scaled to the nominal pressure of the current load.
ForkContactState contact_state_for_load(double nominal_loaded_pressure);

// One pressure sample; returns the updated definite-contact flag.
bool fork_contact_step(ForkContactState& state, double p_l);

enum class Status { Running, Success, Aborted, Failed };

struct PhaseTimings {
  double approach = 0.0;
  double insert = 0.0;
  double lift = 0.0;
  double lower = 0.0;
  double retract = 0.0;
};

struct ManipulationOutcome {
  Status status = Status::Running;
  int attempts = 1;
  PhaseTimings timings;
  std::string reason;
};

// Per-tick snapshot the procedures work from. The target pose refreshes
// every tick, so re-detections on approach take effect immediately.
struct ProcedureInput {
  vehicle::VehicleState state;
  double vehicle_z = 0.0;
  Pose2D target;            // pallet (pick) or slot (place), world frame,
                            // origin at the front face, +x out of it
  double target_z = 0.0;
  double p_l = 0.0;
  bool insertion_signal = false;  // fork-root beam break
};

struct ProcedureCommand {
  control::InnerLoopSetpoints setpoints;
  bool active = true;  // false once the procedure reached a terminal state
};

// Blocks until the lift feedback reaches the target while the vehicle is
// stationary; reports the elapsed time for the standstill metric.
struct StandstillLiftWait {
  StandstillLiftWait(double target, const vehicle::VehicleParams& vp,
                     double tolerance = 0.02, double timeout = 30.0);
  Status tick(double lift_feedback, double dt);

  double target = 0.0;
  double tolerance = 0.02;
  double timeout = 30.0;
  double elapsed = 0.0;
  Status status = Status::Running;
};

// Docking runs slow on a short straight axis, and whatever lateral error
// survives the run-in ends up in the load pose. A stiffer lateral gain than
// open-path tracking is stable here and roughly triples the decay rate.
inline control::PtcGains docking_gains() {
  control::PtcGains g;
  g.k_ey = 1.5;
  return g;
}

struct PickParams {
  vehicle::VehicleParams vp;
  control::PtcGains gains = docking_gains();
  control::AbortThresholds abort;
  double approach_speed = 0.5;   // cap while closing on the pallet [m/s]
  double creep_speed = 0.05;
  double pocket_entry = 0.03;    // fork height above the pallet bottom
  double attach_raise = 0.12;    // raise inside the pockets to take the load
  double travel_clearance = 0.30;  // carry height above the pallet z
  double lift_tolerance = 0.02;
  double phase_timeout = 90.0;
};

// Controlled reverse approach onto a pallet, insertion, and load pickup.
// Resumable: tick once per control step with the current estimates.
class PickProcedure {
 public:
  explicit PickProcedure(PickParams params);

  ProcedureCommand tick(const ProcedureInput& in, double dt);
  Status status() const { return status_; }
  ManipulationOutcome outcome() const;
  const std::vector<std::string>& events() const { return events_; }

 private:
  enum class Phase { Approach, Attach, Lift, Terminal };
  void enter(Phase next, const char* name, double p_l);
  void fail(const char* reason, double p_l);

  PickParams params_;
  Phase phase_ = Phase::Approach;
  Status status_ = Status::Running;
  std::string reason_;
  PhaseTimings timings_;
  double time_ = 0.0;
  double phase_elapsed_ = 0.0;
  double lift_sp_ = 0.0;
  bool lift_sp_set_ = false;
  std::vector<std::string> events_;
};

struct PlaceParams {
  vehicle::VehicleParams vp;
  control::PtcGains gains = docking_gains();
  double approach_speed = 0.5;
  double creep_speed = 0.05;
  double safe_height = 0.10;     // entry clearance above the slot surface
  double carry_drop = 0.10;      // pallet bottom below the fork height
  double lowering_rate = 0.05;   // contact-search descent [m/s]
  double contact_search = 0.25;  // descent below the slot before giving up
  double half_pallet_raise = 0.072;
  double retract_clearance = 0.3;  // fork tip past the slot face when done
  double lift_tolerance = 0.02;
  double nominal_pressure = 55.0;  // loaded pressure for the contact bands
  double phase_timeout = 90.0;
};

// Reverse entry over the slot at a safe height, pressure-guided lowering,
// clearance raise, and forward retraction.
class PlaceProcedure {
 public:
  explicit PlaceProcedure(PlaceParams params);

  ProcedureCommand tick(const ProcedureInput& in, double dt);
  Status status() const { return status_; }
  ManipulationOutcome outcome() const;
  const std::vector<std::string>& events() const { return events_; }

 private:
  enum class Phase { Enter, Lower, Raise, Retract, Terminal };
  void enter(Phase next, const char* name, double p_l);
  void fail(Status status, const char* reason, double p_l);

  PlaceParams params_;
  ForkContactState contact_;
  Phase phase_ = Phase::Enter;
  Status status_ = Status::Running;
  std::string reason_;
  PhaseTimings timings_;
  double time_ = 0.0;
  double phase_elapsed_ = 0.0;
  double lift_sp_ = 0.0;
  bool lift_sp_set_ = false;
  std::vector<std::string> events_;
};

}  // namespace forksim::manipulation
