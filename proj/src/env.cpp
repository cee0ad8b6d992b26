#include "afc/env.hpp"

#include <fstream>

#include "afc/io.hpp"

namespace afc {

RewardBreakdown compute_reward(const RewardInputs& in, const RewardConfig& cfg) {
  RewardBreakdown r;
  const double dv = in.v_now - in.v_prev;
  r.smoothing = -cfg.lambda_smoothing * dv * dv;
  const double e = std::min(in.error_norm, cfg.e_max);
  r.error = -cfg.lambda_error * e * e;
  r.danger = in.unsafe_terminal ? -cfg.lambda_danger * in.speed * in.speed : 0.0;
  if (cfg.stage == RewardStage::kPretrain) {
    if (in.phi2 > 2.0)
      r.agility = cfg.lambda1_agility * (in.phi1 - in.speed);
    else if (in.phi2 < 1.0)
      r.agility = cfg.lambda2_agility * (in.speed - in.phi1);
    else
      r.agility = cfg.lambda3_agility * in.speed;
  } else {
    r.agility = cfg.lambda3_agility * in.speed;
  }
  r.total = r.agility + r.smoothing + r.error + r.danger;
  return r;
}

bool is_unsafe_termination(TerminationReason r) {
  return r == TerminationReason::kEmergencyStop ||
         r == TerminationReason::kCollided ||
         r == TerminationReason::kPlanTimeout;
}

const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::kNone: return "none";
    case TerminationReason::kEmergencyStop: return "emergency_stop";
    case TerminationReason::kCollided: return "collided";
    case TerminationReason::kPlanTimeout: return "plan_timeout";
    case TerminationReason::kGoalReached: return "goal_reached";
    case TerminationReason::kTimeLimit: return "time_limit";
  }
  return "?";
}

Env::Env(WorldSpec world, SensorSpec sensor, MapConfig map, ObservationConfig obs,
         DangerConfig danger, PlannerConfig planner, ControllerGains gains,
         RewardConfig reward, EnvConfig env)
    : world_spec_(std::move(world)),
      sensor_spec_(sensor),
      map_cfg_(map),
      obs_cfg_(obs),
      danger_cfg_(danger),
      planner_cfg_(planner),
      gains_(gains),
      reward_cfg_(reward),
      env_cfg_(env) {
  sensor_spec_.validate();
  map_cfg_.validate();
  obs_cfg_.validate();
  planner_cfg_.validate();
  reward_cfg_.validate();
  env_cfg_.validate();
}

Observation Env::reset(uint64_t seed, const Vec3& start_offset) {
  WorldSpec spec = world_spec_;
  spec.seed = seed;
  gt_ = std::make_shared<GroundTruth>(generate(spec));

  Vec3 start = gt_->start;
  for (double scale = 1.0; scale > 0.1; scale *= 0.5) {
    const Vec3 candidate = gt_->start + start_offset * scale;
    if (gt_->grid.in_bounds(candidate) &&
        !gt_->occupied_within(candidate, 2.0 * planner_cfg_.vehicle_radius)) {
      start = candidate;
      break;
    }
  }

  veh_ = VehicleState{};
  veh_.p = start;
  veh_.p_des = start;
  const Vec3 fwd = gt_->goal - gt_->start;
  veh_.yaw = std::atan2(fwd.y(), fwd.x());
  pid_ = PidState{};

  clock_ = 0.0;
  last_capture_emit_ = 0.0;
  pending_.clear();
  collided_latch_ = false;
  terminal_ = false;
  last_plan_status_ = PlanStatus::kSuccess;
  v_prev_ = env_cfg_.v_min;
  stats_ = EpisodeStats{};
  traj_ = Trajectory::hover(veh_.p);
  traj_start_time_ = 0.0;

  map_ = BeliefMap(map_cfg_, veh_.p);
  // Warm-up frame, integrated immediately (pre-launch mapping).
  map_.integrate(capture(*gt_, veh_.p, veh_.yaw, sensor_spec_, 0.0), sensor_spec_);
  esdf_ = map_.esdf();

  if (env_cfg_.trace && !env_cfg_.trace_path.empty()) {
    trace_ = std::make_unique<std::ofstream>(env_cfg_.trace_path, std::ios::trunc);
    if (!*trace_) throw IoError("cannot open trace file: " + env_cfg_.trace_path);
    *trace_ << "t,px,py,pz,vx,vy,vz,speed,v_dagger,r_total,r_agility,"
               "r_smoothing,r_error,r_danger,phi1,phi2,terminal,reason\n";
  } else {
    trace_.reset();
  }

  return render_observation(v_prev_);
}

bool Env::gt_collision() const {
  const Vec3i c = gt_->grid.cell_of(veh_.p);
  if (gt_->grid.in_bounds(c) && gt_->grid.at(c)) return true;
  if (veh_.tracking_error().norm() > env_cfg_.hard_error_bound &&
      gt_->occupied_within(veh_.p, planner_cfg_.vehicle_radius))
    return true;
  return false;
}

void Env::advance_sim(double t_target) {
  const double ctrl_dt = env_cfg_.ctrl_dt;
  while (clock_ < t_target - 1e-12 && !collided_latch_) {
    // Next controller grid instant strictly after the clock.
    int64_t k = static_cast<int64_t>(std::floor(clock_ / ctrl_dt));
    while (k * ctrl_dt <= clock_ + 1e-12) ++k;
    double t_ctrl = k * ctrl_dt;

    // Next sensor capture.
    const auto caps = due_frames(last_capture_emit_,
                                 std::min(t_target, t_ctrl), sensor_spec_);
    double t_cap = caps.empty() ? std::numeric_limits<double>::infinity()
                                : caps.front();

    // Next pending delivery.
    double t_del = std::numeric_limits<double>::infinity();
    for (const auto& f : pending_)
      t_del = std::min(t_del, f.capture_time + sensor_spec_.latency);

    double t_next = std::min({t_ctrl, t_cap, t_del, t_target});

    // Deliveries first, then captures, then the controller (sensor-first on
    // ties). Events beyond t_target wait for the next tick.
    if (t_del <= t_next + 1e-12 && t_del <= t_target + 1e-12) {
      std::vector<DepthFrame> still;
      for (auto& f : pending_) {
        if (f.capture_time + sensor_spec_.latency <= t_del + 1e-12)
          map_.integrate(f, sensor_spec_);
        else
          still.push_back(std::move(f));
      }
      pending_ = std::move(still);
      clock_ = std::max(clock_, t_del);
      continue;
    }
    if (t_cap <= t_next + 1e-12) {
      pending_.push_back(capture(*gt_, veh_.p, veh_.yaw, sensor_spec_, t_cap));
      last_capture_emit_ = t_cap;
      ++capture_events_;
      clock_ = std::max(clock_, t_cap);
      continue;
    }
    if (t_ctrl <= t_target + 1e-12) {
      const Vec3 p_before = veh_.p;
      const double t_traj = std::max(0.0, (t_ctrl - ctrl_dt) - traj_start_time_);
      track_step(veh_, pid_, traj_, t_traj, gains_, ctrl_dt);
      stats_.path_length += (veh_.p - p_before).norm();
      ++ctrl_events_;
      clock_ = t_ctrl;
      if (gt_collision()) collided_latch_ = true;
      continue;
    }
    clock_ = t_target;
  }
  if (clock_ < t_target) clock_ = std::max(clock_, t_target);
}

ReplanTriggers Env::compute_triggers() const {
  ReplanTriggers tr;
  const double elapsed = clock_ - traj_start_time_;
  const double remaining = traj_.duration() - elapsed;
  tr.trajectory_nearly_consumed = remaining < env_cfg_.consumed_threshold;

  const double horizon = std::min(remaining, env_cfg_.collision_check_horizon);
  for (double dt = 0.0; dt <= horizon; dt += 0.05) {
    const Vec3 p = traj_.position(elapsed + dt);
    if (!esdf_.dist.in_bounds(p)) break;
    if (esdf_.at(p) < planner_cfg_.safety_clearance) {
      tr.new_obstacle_on_trajectory = true;
      break;
    }
  }
  return tr;
}

Observation Env::render_observation(double v_for_preplan) {
  // Fresh pre-plan under the current agility; rendered, never executed.
  PlanOutcome pre = plan(map_, esdf_, veh_, gt_->goal, v_for_preplan, planner_cfg_);
  const Trajectory* paint = &pre.trajectory;
  Trajectory fallback;
  if (pre.status != PlanStatus::kSuccess) {
    fallback = Trajectory::stop(veh_.p, veh_.v, planner_cfg_.a_max);
    paint = &fallback;
  }
  Observation obs;
  obs.slices = paint_and_slice(map_, *paint, obs_cfg_, veh_.p);
  obs.velocity = veh_.v;
  obs.tracking_error = veh_.tracking_error();
  obs.v_prev = v_for_preplan;
  return obs;
}

StepResult Env::step(double v_dagger) {
  if (terminal_) throw StepAfterTerminal("step() after terminal");
  StepResult res;
  ctrl_events_ = 0;
  capture_events_ = 0;
  const double v = std::clamp(v_dagger, env_cfg_.v_min, env_cfg_.v_max);

  const ReplanTriggers triggers = compute_triggers();
  const double dv = v - v_prev_;
  const bool forced_by_agility = dv < -0.3 || dv > 0.5;
  const bool do_replan = should_replan(v, v_prev_, triggers);

  const double tick_start = clock_;
  bool pending_plan_timeout = false;
  bool pending_emergency = false;

  if (do_replan) {
    // The planner sees the map as of the tick boundary; frames delivered
    // while it runs are only visible to later plans.
    PlanOutcome outcome = plan(map_, esdf_, veh_, gt_->goal, v, planner_cfg_);
    res.replanned = true;
    res.plan_duration = outcome.iterations_used * planner_cfg_.iter_time_cost;
    advance_sim(tick_start + res.plan_duration);
    last_plan_status_ = outcome.status;

    if (outcome.status == PlanStatus::kSuccess) {
      traj_ = std::move(outcome.trajectory);
      traj_start_time_ = clock_;
    } else if (forced_by_agility && outcome.status == PlanStatus::kTimeout) {
      pending_plan_timeout = true;
    } else {
      // Planner-internal failure: attempt emergency braking; terminal only
      // if an observed obstacle sits inside the braking distance.
      SafetyInputs si;
      si.gt_collision = false;
      si.believed_obstacle_distance =
          danger_features(map_, veh_.p, danger_cfg_).d_near;
      si.speed = veh_.v.norm();
      si.a_max = planner_cfg_.a_max;
      si.last_plan_status = outcome.status;
      if (safety_state(si) == SafetyState::kEmergencyStop) {
        pending_emergency = true;
      } else {
        traj_ = Trajectory::stop(veh_.p, veh_.v, planner_cfg_.a_max);
        traj_start_time_ = clock_;
      }
    }
  }

  if (!pending_plan_timeout && !pending_emergency)
    advance_sim(tick_start + res.plan_duration + env_cfg_.policy_dt);

  // Termination taxonomy (collision latch wins).
  TerminationReason reason = TerminationReason::kNone;
  if (collided_latch_ || gt_collision())
    reason = TerminationReason::kCollided;
  else if (pending_emergency)
    reason = TerminationReason::kEmergencyStop;
  else if (pending_plan_timeout)
    reason = TerminationReason::kPlanTimeout;
  else if ((veh_.p - gt_->goal).norm() <= env_cfg_.goal_radius)
    reason = TerminationReason::kGoalReached;
  else if (clock_ >= env_cfg_.time_limit)
    reason = TerminationReason::kTimeLimit;

  terminal_ = reason != TerminationReason::kNone;

  // Map bookkeeping at the tick boundary: recenter, then one ESDF shared by
  // the trigger check, the next replan and the pre-plan below.
  map_.recenter(veh_.p);
  esdf_ = map_.esdf();

  res.danger = danger_features(map_, veh_.p, danger_cfg_);
  RewardInputs ri;
  ri.speed = veh_.v.norm();
  ri.error_norm = veh_.tracking_error().norm();
  ri.v_now = v;
  ri.v_prev = v_prev_;
  ri.phi1 = res.danger.phi1;
  ri.phi2 = res.danger.phi2;
  ri.unsafe_terminal = is_unsafe_termination(reason);
  res.components = compute_reward(ri, reward_cfg_);
  res.reward = res.components.total;
  res.reason = reason;
  res.terminal = terminal_;
  res.clock = clock_;
  res.ctrl_events = ctrl_events_;
  res.capture_events = capture_events_;

  res.observation = render_observation(v);

  stats_.elapsed = clock_;
  stats_.ticks += 1;
  stats_.speed_accum += ri.speed * env_cfg_.policy_dt;
  stats_.agility_accum += v;
  stats_.reason = reason;

  v_prev_ = v;
  write_trace_row(res, v);
  return res;
}

void Env::write_trace_row(const StepResult& r, double v_cmd) {
  if (!trace_) return;
  *trace_ << clock_ << ',' << veh_.p.x() << ',' << veh_.p.y() << ','
          << veh_.p.z() << ',' << veh_.v.x() << ',' << veh_.v.y() << ','
          << veh_.v.z() << ',' << veh_.v.norm() << ',' << v_cmd << ','
          << r.components.total << ',' << r.components.agility << ','
          << r.components.smoothing << ',' << r.components.error << ','
          << r.components.danger << ',' << r.danger.phi1 << ','
          << r.danger.phi2 << ',' << (r.terminal ? 1 : 0) << ','
          << to_string(r.reason) << '\n';
}

}  // namespace afc
