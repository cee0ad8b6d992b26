// POMDP episode loop: non-stopping clock, asynchronous sensing, hierarchical
// action application (agility cap -> planner -> tracker), reward assembly
// and termination. The planner is the inner-loop policy; the outer-loop
// action is the agility cap fed to it.
#pragma once

#include <memory>
#include <optional>

#include "afc/mapping.hpp"
#include "afc/planner.hpp"
#include "afc/vehicle.hpp"
#include "afc/world.hpp"

namespace afc {

struct StepAfterTerminal : std::logic_error {
  using std::logic_error::logic_error;
};

enum class RewardStage { kPretrain, kFinetune };

struct RewardConfig {
  double lambda_smoothing = 0.5;
  double lambda_error = 2.0;
  double lambda_danger = 1.0;
  double lambda1_agility = 0.3;
  double lambda2_agility = 0.3;
  double lambda3_agility = 0.1;
  double e_max = 0.5;
  double gamma = 0.99;
  RewardStage stage = RewardStage::kPretrain;

  void validate() const {
    if (!(lambda2_agility > lambda3_agility))
      throw std::invalid_argument("need lambda2_agility > lambda3_agility");
    if (e_max <= 0) throw std::invalid_argument("e_max must be > 0");
    if (!(gamma > 0 && gamma < 1))
      throw std::invalid_argument("gamma must be in (0,1)");
  }
};

struct RewardBreakdown {
  double agility = 0.0;
  double smoothing = 0.0;
  double error = 0.0;
  double danger = 0.0;
  double total = 0.0;  // always the exact sum of the components
};

struct RewardInputs {
  double speed = 0.0;     // |v_t|
  double error_norm = 0.0;
  double v_now = 0.0;     // agility action this tick
  double v_prev = 0.0;    // previous tick's action
  double phi1 = 0.0;
  double phi2 = 0.0;
  bool unsafe_terminal = false;
};

RewardBreakdown compute_reward(const RewardInputs& in, const RewardConfig& cfg);

enum class TerminationReason {
  kNone,
  kEmergencyStop,
  kCollided,
  kPlanTimeout,
  kGoalReached,
  kTimeLimit
};

bool is_unsafe_termination(TerminationReason r);
const char* to_string(TerminationReason r);

struct Observation {
  // K slices, each slice_size^2 encoded cells, row-major.
  std::vector<std::vector<double>> slices;
  Vec3 velocity = Vec3::Zero();
  Vec3 tracking_error = Vec3::Zero();
  double v_prev = 0.0;

  std::vector<double> scalars() const {
    return {velocity.x(), velocity.y(), velocity.z(),
            tracking_error.x(), tracking_error.y(), tracking_error.z(), v_prev};
  }

  std::vector<double> flat_slices() const {
    std::vector<double> out;
    for (const auto& s : slices) out.insert(out.end(), s.begin(), s.end());
    return out;
  }
};

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool terminal = false;
  TerminationReason reason = TerminationReason::kNone;
  RewardBreakdown components;
  DangerFeatures danger;
  double clock = 0.0;
  bool replanned = false;
  double plan_duration = 0.0;
  int ctrl_events = 0;      // controller substeps inside this tick
  int capture_events = 0;   // sensor captures inside this tick
};

struct EnvConfig {
  double policy_dt = 0.1;   // 10 Hz agility policy
  double ctrl_dt = 0.02;    // 50 Hz tracker
  double time_limit = 60.0;
  double goal_radius = 0.5;
  double v_min = 0.5, v_max = 3.5;          // agility action bounds
  double collision_check_horizon = 1.5;     // seconds of trajectory audited
  double consumed_threshold = 1.0;          // replan when remaining < this
  double hard_error_bound = 0.7;            // tracking divergence clause
  bool trace = false;
  std::string trace_path;

  void validate() const {
    if (policy_dt <= 0 || ctrl_dt <= 0 || policy_dt < ctrl_dt)
      throw std::invalid_argument("bad tick configuration");
    if (v_min <= 0 || v_max <= v_min)
      throw std::invalid_argument("bad agility bounds");
  }
};

struct EpisodeStats {
  double path_length = 0.0;
  double elapsed = 0.0;
  double speed_accum = 0.0;       // integral of |v| dt over ticks
  double agility_accum = 0.0;     // sum of v_dagger per tick
  int ticks = 0;
  TerminationReason reason = TerminationReason::kNone;
  double mean_speed() const { return elapsed > 0 ? path_length / elapsed : 0.0; }
};

class Env {
 public:
  Env(WorldSpec world, SensorSpec sensor, MapConfig map, ObservationConfig obs,
      DangerConfig danger, PlannerConfig planner, ControllerGains gains,
      RewardConfig reward, EnvConfig env);

  // Builds (or rebuilds) the world with the given seed, places the vehicle
  // at rest at the start, warms up the map with one frame and pre-plans at
  // v_min. Deterministic per seed. start_offset shifts the launch position
  // (shrunk if the shifted start is not safely free).
  Observation reset(uint64_t seed, const Vec3& start_offset = Vec3::Zero());

  StepResult step(double v_dagger);

  bool terminal() const { return terminal_; }
  double clock() const { return clock_; }
  const GroundTruth& world() const { return *gt_; }
  GroundTruth& mutable_world() { return *gt_; }  // test seam
  const BeliefMap& map() const { return map_; }
  const VehicleState& vehicle() const { return veh_; }
  const EpisodeStats& stats() const { return stats_; }
  const RewardConfig& reward_config() const { return reward_cfg_; }
  void set_reward_stage(RewardStage s) { reward_cfg_.stage = s; }
  // Take effect at the next reset.
  void set_world_spec(const WorldSpec& spec) { world_spec_ = spec; }
  void set_trace(const std::string& path) {
    env_cfg_.trace = !path.empty();
    env_cfg_.trace_path = path;
  }
  const EnvConfig& config() const { return env_cfg_; }
  const ObservationConfig& observation_config() const { return obs_cfg_; }

 private:
  void advance_sim(double t_target);
  Observation render_observation(double v_for_preplan);
  ReplanTriggers compute_triggers() const;
  bool gt_collision() const;
  void write_trace_row(const StepResult& r, double v_cmd);

  // Configuration.
  WorldSpec world_spec_;
  SensorSpec sensor_spec_;
  MapConfig map_cfg_;
  ObservationConfig obs_cfg_;
  DangerConfig danger_cfg_;
  PlannerConfig planner_cfg_;
  ControllerGains gains_;
  RewardConfig reward_cfg_;
  EnvConfig env_cfg_;

  // Episode state.
  std::shared_ptr<GroundTruth> gt_;
  BeliefMap map_;
  Esdf esdf_;  // matches map_ as of the last tick boundary
  VehicleState veh_;
  PidState pid_;
  Trajectory traj_;
  double traj_start_time_ = 0.0;
  PlanStatus last_plan_status_ = PlanStatus::kSuccess;
  double clock_ = 0.0;
  double last_capture_emit_ = 0.0;
  std::vector<DepthFrame> pending_;  // awaiting delivery (capture + latency)
  double v_prev_ = 0.0;
  bool terminal_ = true;
  bool collided_latch_ = false;
  int ctrl_events_ = 0;
  int capture_events_ = 0;
  EpisodeStats stats_;
  std::unique_ptr<std::ofstream> trace_;
};

}  // namespace afc
