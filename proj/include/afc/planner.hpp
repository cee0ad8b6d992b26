// Inner-loop local planner: A*-seeded ESDF-gradient waypoint refinement with
// decoupled trapezoidal time parameterization and quintic fitting, a replan
// criterion gated on the agility change, and the safety state machine.
#pragma once

#include "afc/mapping.hpp"
#include "afc/vehicle.hpp"

namespace afc {

struct PlannerConfig {
  double smoothness_weight = 1.0;
  double collision_weight = 4.0;
  double time_weight = 1.0;       // rho scale; realized by the time-optimal
                                  // profile rather than an explicit term
  double safety_clearance = 0.25;  // meters, >= vehicle radius
  int max_iters = 120;
  double iter_time_cost = 2e-4;   // simulated seconds per iteration
  double a_max = 6.0;             // m/s^2 trajectory acceleration bound
  double local_horizon = 4.5;     // meters, local goal distance cap
  double vehicle_radius = 0.2;

  // Refinement details.
  double waypoint_spacing = 0.3;      // meters between optimized waypoints
  double refine_margin = 0.05;        // extra clearance targeted by refinement
  double gradient_step = 0.12;        // initial line-search step, meters
  double goal_snap_radius = 1.0;      // believed-free snap for the local goal
  int astar_expansion_cap = 60000;

  void validate() const {
    if (max_iters < 1) throw std::invalid_argument("max_iters >= 1");
    if (safety_clearance < vehicle_radius)
      throw std::invalid_argument("safety_clearance >= vehicle radius");
    if (smoothness_weight < 0 || collision_weight < 0 || time_weight < 0)
      throw std::invalid_argument("weights must be >= 0");
  }
};

enum class PlanStatus { kSuccess, kInfeasible, kTimeout };

struct PlanOutcome {
  PlanStatus status = PlanStatus::kInfeasible;
  Trajectory trajectory;
  int iterations_used = 0;
  // Audit margin actually enforced on samples of a Success trajectory:
  // trilinear ESDF >= safety_clearance + audit pad.
  double audited_clearance = 0.0;
};

// Generate a collision-free, agility-capped trajectory toward `goal` in the
// believed map. The ESDF must come from the same map snapshot.
PlanOutcome plan(const BeliefMap& map, const Esdf& esdf,
                 const VehicleState& state, const Vec3& goal, double v_cap,
                 const PlannerConfig& cfg);

struct ReplanTriggers {
  bool new_obstacle_on_trajectory = false;
  bool trajectory_nearly_consumed = false;
};

// True iff the agility delta leaves [-0.3, 0.5] m/s or a backbone trigger
// fires. Pure function.
bool should_replan(double v_now, double v_prev, const ReplanTriggers& triggers);

enum class SafetyState { kNominal, kEmergencyStop, kCollided };

struct SafetyInputs {
  bool gt_collision = false;            // ground-truth body overlap (from env)
  bool hard_tracking_divergence = false;  // large e_t with an obstacle at body
  double believed_obstacle_distance = 0.0;  // occupied-classified cells only
  double speed = 0.0;
  double a_max = 6.0;
  PlanStatus last_plan_status = PlanStatus::kSuccess;
};

SafetyState safety_state(const SafetyInputs& in);

}  // namespace afc
