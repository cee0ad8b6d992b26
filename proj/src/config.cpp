#include "afc/config.hpp"

#include <set>

#include "afc/io.hpp"

namespace afc {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& known,
                const std::string& section) {
  if (!j.is_object())
    throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : j.items())
    if (!known.count(key))
      throw ConfigError("unknown config key '" + section + "." + key + "'");
}

template <typename T>
void get(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

void get_vec3(const json& j, const char* key, Vec3& out) {
  if (j.contains(key)) {
    auto a = j.at(key);
    if (!a.is_array() || a.size() != 3)
      throw ConfigError(std::string("key '") + key + "' must be a 3-array");
    out = Vec3(a[0], a[1], a[2]);
  }
}

json vec3_to_json(const Vec3& v) { return json{v.x(), v.y(), v.z()}; }

}  // namespace

RunConfig::RunConfig() {
  world.regions = default_regions(world.extent.x(), world_density_scale);
  world.connectivity_clearance = 0.55;  // evaluation worlds must be flyable
                                        // for the conservative planner
}

Env RunConfig::make_env() const {
  return Env(world, sensor, mapping, observation, danger, planner, vehicle,
             reward, env);
}

nn::PolicyConfig RunConfig::policy_config() const {
  nn::PolicyConfig pc;
  pc.k_slices = observation.slice_count;
  pc.slice_size = observation.slice_size;
  pc.scalar_dim = 7;
  pc.v_min = env.v_min;
  pc.v_max = env.v_max;
  pc.init_seed = seed;
  return pc;
}

rl::TrainSchedule RunConfig::train_schedule() const {
  rl::TrainSchedule s;
  s.stage1_steps = schedule.stage1_steps;
  s.stage2_steps = schedule.stage2_steps;
  s.freeze_encoder_in_stage2 = schedule.freeze_encoder_in_stage2;
  s.train_seed_base = schedule.train_seed_base;
  s.checkpoint_every = schedule.checkpoint_every;
  for (double scale : schedule.curriculum_density_scales) {
    WorldSpec w = world;
    w.regions = default_regions(w.extent.x(), world_density_scale * scale);
    s.curriculum.push_back(w);
  }
  return s;
}

BenchConfig RunConfig::bench_config() const {
  BenchConfig b;
  b.world_seeds = eval_world_seeds();
  b.trials_per_world = bench.trials_per_world;
  b.start_jitter = bench.start_jitter;
  b.save_traces = bench.save_traces;
  return b;
}

std::vector<uint64_t> RunConfig::eval_world_seeds() const {
  std::vector<uint64_t> seeds;
  for (int i = 0; i < bench.n_worlds; ++i)
    seeds.push_back(bench.eval_seed_base + static_cast<uint64_t>(i));
  return seeds;
}

json RunConfig::to_json() const {
  json regions = json::array();
  for (const auto& r : world.regions) {
    json kinds = json::array();
    for (auto k : r.kinds) kinds.push_back(static_cast<int>(k));
    regions.push_back({{"x_begin", r.x_begin},
                       {"x_end", r.x_end},
                       {"density", r.density},
                       {"kinds", kinds}});
  }
  return json{
      {"seed", seed},
      {"world",
       {{"extent", vec3_to_json(world.extent)},
        {"resolution", world.resolution},
        {"density_scale", world_density_scale},
        {"regions", regions},
        {"pillar_half_min", world.pillar_half_min},
        {"pillar_half_max", world.pillar_half_max},
        {"box_size_min", world.box_size_min},
        {"box_size_max", world.box_size_max},
        {"wall_span_min", world.wall_span_min},
        {"wall_span_max", world.wall_span_max},
        {"wall_thickness_min", world.wall_thickness_min},
        {"wall_thickness_max", world.wall_thickness_max},
        {"gap_width_min", world.gap_width_min},
        {"gap_width_max", world.gap_width_max},
        {"start_margin", world.start_margin},
        {"keepout_radius", world.keepout_radius},
        {"goal_y_jitter", world.goal_y_jitter},
        {"connectivity_clearance", world.connectivity_clearance},
        {"max_retries", world.max_retries}}},
      {"sensor",
       {{"h_fov_deg", sensor.h_fov_deg},
        {"v_fov_deg", sensor.v_fov_deg},
        {"min_range", sensor.min_range},
        {"max_range", sensor.max_range},
        {"rate_hz", sensor.rate_hz},
        {"latency", sensor.latency},
        {"rays_h", sensor.rays_h},
        {"rays_v", sensor.rays_v}}},
      {"mapping",
       {{"resolution", mapping.resolution},
        {"local_extent", vec3_to_json(mapping.local_extent)},
        {"l_occ", mapping.l_occ},
        {"l_free", mapping.l_free},
        {"l_min", mapping.l_min},
        {"l_max", mapping.l_max},
        {"occ_cutoff", mapping.occ_cutoff},
        {"free_cutoff", mapping.free_cutoff},
        {"unknown_as_occupied", mapping.unknown_as_occupied},
        {"esdf_max", mapping.esdf_max}}},
      {"observation",
       {{"slice_count", observation.slice_count},
        {"slice_dt", observation.slice_dt},
        {"slice_size", observation.slice_size},
        {"slice_cell", observation.slice_cell},
        {"encoding_free", observation.cell_encoding[0]},
        {"encoding_occupied", observation.cell_encoding[1]},
        {"encoding_unknown", observation.cell_encoding[2]},
        {"encoding_on_trajectory", observation.cell_encoding[3]}}},
      {"danger",
       {{"w_d", danger.w_d},
        {"w_n", danger.w_n},
        {"w_v", danger.w_v},
        {"d_ref", danger.d_ref},
        {"n_ref", danger.n_ref},
        {"vol_ref", danger.vol_ref},
        {"r_phi", danger.r_phi},
        {"v_lo", danger.v_lo},
        {"v_hi", danger.v_hi}}},
      {"planner",
       {{"smoothness_weight", planner.smoothness_weight},
        {"collision_weight", planner.collision_weight},
        {"time_weight", planner.time_weight},
        {"safety_clearance", planner.safety_clearance},
        {"max_iters", planner.max_iters},
        {"iter_time_cost", planner.iter_time_cost},
        {"a_max", planner.a_max},
        {"local_horizon", planner.local_horizon},
        {"vehicle_radius", planner.vehicle_radius},
        {"waypoint_spacing", planner.waypoint_spacing},
        {"refine_margin", planner.refine_margin},
        {"gradient_step", planner.gradient_step},
        {"goal_snap_radius", planner.goal_snap_radius},
        {"astar_expansion_cap", planner.astar_expansion_cap}}},
      {"vehicle",
       {{"kp", vec3_to_json(vehicle.kp)},
        {"ki", vec3_to_json(vehicle.ki)},
        {"kd", vec3_to_json(vehicle.kd)},
        {"integrator_clamp", vehicle.integrator_clamp},
        {"a_cmd_max", vehicle.a_cmd_max},
        {"rate_hz", vehicle.rate_hz},
        {"yaw_rate_max", vehicle.yaw_rate_max}}},
      {"reward",
       {{"lambda_smoothing", reward.lambda_smoothing},
        {"lambda_error", reward.lambda_error},
        {"lambda_danger", reward.lambda_danger},
        {"lambda1_agility", reward.lambda1_agility},
        {"lambda2_agility", reward.lambda2_agility},
        {"lambda3_agility", reward.lambda3_agility},
        {"e_max", reward.e_max},
        {"gamma", reward.gamma},
        {"stage", reward.stage == RewardStage::kPretrain ? "pretrain"
                                                         : "finetune"}}},
      {"env",
       {{"policy_dt", env.policy_dt},
        {"ctrl_dt", env.ctrl_dt},
        {"time_limit", env.time_limit},
        {"goal_radius", env.goal_radius},
        {"v_min", env.v_min},
        {"v_max", env.v_max},
        {"collision_check_horizon", env.collision_check_horizon},
        {"consumed_threshold", env.consumed_threshold},
        {"hard_error_bound", env.hard_error_bound}}},
      {"sac",
       {{"gamma", sac.gamma},
        {"tau", sac.tau},
        {"lr_actor", sac.lr_actor},
        {"lr_critic", sac.lr_critic},
        {"lr_alpha", sac.lr_alpha},
        {"batch_size", sac.batch_size},
        {"buffer_capacity", sac.buffer_capacity},
        {"alpha_per", sac.alpha_per},
        {"beta_per_start", sac.beta_per_start},
        {"beta_per_end", sac.beta_per_end},
        {"updates_per_step", sac.updates_per_step},
        {"warmup_steps", sac.warmup_steps},
        {"target_entropy", sac.target_entropy},
        {"eps_per", sac.eps_per},
        {"init_alpha", sac.init_alpha}}},
      {"schedule",
       {{"stage1_steps", schedule.stage1_steps},
        {"stage2_steps", schedule.stage2_steps},
        {"freeze_encoder_in_stage2", schedule.freeze_encoder_in_stage2},
        {"curriculum_density_scales", schedule.curriculum_density_scales},
        {"train_seed_base", schedule.train_seed_base},
        {"checkpoint_every", schedule.checkpoint_every}}},
      {"bench",
       {{"eval_seed_base", bench.eval_seed_base},
        {"n_worlds", bench.n_worlds},
        {"trials_per_world", bench.trials_per_world},
        {"start_jitter", bench.start_jitter},
        {"save_traces", bench.save_traces},
        {"agility_sweep", bench.agility_sweep}}}};
}

RunConfig RunConfig::from_json(const json& j) {
  check_keys(j, {"seed", "world", "sensor", "mapping", "observation", "danger",
                 "planner", "vehicle", "reward", "env", "sac", "schedule",
                 "bench"},
             "<root>");
  RunConfig c;
  get(j, "seed", c.seed);

  if (j.contains("world")) {
    const auto& w = j.at("world");
    check_keys(w,
               {"extent", "resolution", "density_scale", "regions",
                "pillar_half_min", "pillar_half_max", "box_size_min",
                "box_size_max", "wall_span_min", "wall_span_max",
                "wall_thickness_min", "wall_thickness_max", "gap_width_min",
                "gap_width_max", "start_margin", "keepout_radius",
                "goal_y_jitter", "connectivity_clearance", "max_retries"},
               "world");
    get_vec3(w, "extent", c.world.extent);
    get(w, "resolution", c.world.resolution);
    get(w, "density_scale", c.world_density_scale);
    get(w, "pillar_half_min", c.world.pillar_half_min);
    get(w, "pillar_half_max", c.world.pillar_half_max);
    get(w, "box_size_min", c.world.box_size_min);
    get(w, "box_size_max", c.world.box_size_max);
    get(w, "wall_span_min", c.world.wall_span_min);
    get(w, "wall_span_max", c.world.wall_span_max);
    get(w, "wall_thickness_min", c.world.wall_thickness_min);
    get(w, "wall_thickness_max", c.world.wall_thickness_max);
    get(w, "gap_width_min", c.world.gap_width_min);
    get(w, "gap_width_max", c.world.gap_width_max);
    get(w, "start_margin", c.world.start_margin);
    get(w, "keepout_radius", c.world.keepout_radius);
    get(w, "goal_y_jitter", c.world.goal_y_jitter);
    get(w, "connectivity_clearance", c.world.connectivity_clearance);
    get(w, "max_retries", c.world.max_retries);
    if (w.contains("regions") && !w.at("regions").is_null()) {
      c.world.regions.clear();
      for (const auto& rj : w.at("regions")) {
        check_keys(rj, {"x_begin", "x_end", "density", "kinds"}, "world.regions[]");
        RegionSpec r;
        r.x_begin = rj.at("x_begin");
        r.x_end = rj.at("x_end");
        r.density = rj.at("density");
        r.kinds.clear();
        for (const auto& k : rj.at("kinds"))
          r.kinds.push_back(static_cast<ObstacleKind>(k.get<int>()));
        c.world.regions.push_back(r);
      }
    } else {
      c.world.regions = default_regions(c.world.extent.x(), c.world_density_scale);
    }
  }

  if (j.contains("sensor")) {
    const auto& s = j.at("sensor");
    check_keys(s,
               {"h_fov_deg", "v_fov_deg", "min_range", "max_range", "rate_hz",
                "latency", "rays_h", "rays_v"},
               "sensor");
    get(s, "h_fov_deg", c.sensor.h_fov_deg);
    get(s, "v_fov_deg", c.sensor.v_fov_deg);
    get(s, "min_range", c.sensor.min_range);
    get(s, "max_range", c.sensor.max_range);
    get(s, "rate_hz", c.sensor.rate_hz);
    get(s, "latency", c.sensor.latency);
    get(s, "rays_h", c.sensor.rays_h);
    get(s, "rays_v", c.sensor.rays_v);
  }

  if (j.contains("mapping")) {
    const auto& m = j.at("mapping");
    check_keys(m,
               {"resolution", "local_extent", "l_occ", "l_free", "l_min",
                "l_max", "occ_cutoff", "free_cutoff", "unknown_as_occupied",
                "esdf_max"},
               "mapping");
    get(m, "resolution", c.mapping.resolution);
    get_vec3(m, "local_extent", c.mapping.local_extent);
    get(m, "l_occ", c.mapping.l_occ);
    get(m, "l_free", c.mapping.l_free);
    get(m, "l_min", c.mapping.l_min);
    get(m, "l_max", c.mapping.l_max);
    get(m, "occ_cutoff", c.mapping.occ_cutoff);
    get(m, "free_cutoff", c.mapping.free_cutoff);
    get(m, "unknown_as_occupied", c.mapping.unknown_as_occupied);
    get(m, "esdf_max", c.mapping.esdf_max);
  }

  if (j.contains("observation")) {
    const auto& o = j.at("observation");
    check_keys(o,
               {"slice_count", "slice_dt", "slice_size", "slice_cell",
                "encoding_free", "encoding_occupied", "encoding_unknown",
                "encoding_on_trajectory"},
               "observation");
    get(o, "slice_count", c.observation.slice_count);
    get(o, "slice_dt", c.observation.slice_dt);
    get(o, "slice_size", c.observation.slice_size);
    get(o, "slice_cell", c.observation.slice_cell);
    get(o, "encoding_free", c.observation.cell_encoding[0]);
    get(o, "encoding_occupied", c.observation.cell_encoding[1]);
    get(o, "encoding_unknown", c.observation.cell_encoding[2]);
    get(o, "encoding_on_trajectory", c.observation.cell_encoding[3]);
  }

  if (j.contains("danger")) {
    const auto& d = j.at("danger");
    check_keys(d, {"w_d", "w_n", "w_v", "d_ref", "n_ref", "vol_ref", "r_phi",
                   "v_lo", "v_hi"},
               "danger");
    get(d, "w_d", c.danger.w_d);
    get(d, "w_n", c.danger.w_n);
    get(d, "w_v", c.danger.w_v);
    get(d, "d_ref", c.danger.d_ref);
    get(d, "n_ref", c.danger.n_ref);
    get(d, "vol_ref", c.danger.vol_ref);
    get(d, "r_phi", c.danger.r_phi);
    get(d, "v_lo", c.danger.v_lo);
    get(d, "v_hi", c.danger.v_hi);
  }

  if (j.contains("planner")) {
    const auto& p = j.at("planner");
    check_keys(p,
               {"smoothness_weight", "collision_weight", "time_weight",
                "safety_clearance", "max_iters", "iter_time_cost", "a_max",
                "local_horizon", "vehicle_radius", "waypoint_spacing",
                "refine_margin", "gradient_step", "goal_snap_radius",
                "astar_expansion_cap"},
               "planner");
    get(p, "smoothness_weight", c.planner.smoothness_weight);
    get(p, "collision_weight", c.planner.collision_weight);
    get(p, "time_weight", c.planner.time_weight);
    get(p, "safety_clearance", c.planner.safety_clearance);
    get(p, "max_iters", c.planner.max_iters);
    get(p, "iter_time_cost", c.planner.iter_time_cost);
    get(p, "a_max", c.planner.a_max);
    get(p, "local_horizon", c.planner.local_horizon);
    get(p, "vehicle_radius", c.planner.vehicle_radius);
    get(p, "waypoint_spacing", c.planner.waypoint_spacing);
    get(p, "refine_margin", c.planner.refine_margin);
    get(p, "gradient_step", c.planner.gradient_step);
    get(p, "goal_snap_radius", c.planner.goal_snap_radius);
    get(p, "astar_expansion_cap", c.planner.astar_expansion_cap);
  }

  if (j.contains("vehicle")) {
    const auto& v = j.at("vehicle");
    check_keys(v,
               {"kp", "ki", "kd", "integrator_clamp", "a_cmd_max", "rate_hz",
                "yaw_rate_max"},
               "vehicle");
    get_vec3(v, "kp", c.vehicle.kp);
    get_vec3(v, "ki", c.vehicle.ki);
    get_vec3(v, "kd", c.vehicle.kd);
    get(v, "integrator_clamp", c.vehicle.integrator_clamp);
    get(v, "a_cmd_max", c.vehicle.a_cmd_max);
    get(v, "rate_hz", c.vehicle.rate_hz);
    get(v, "yaw_rate_max", c.vehicle.yaw_rate_max);
  }

  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    check_keys(r,
               {"lambda_smoothing", "lambda_error", "lambda_danger",
                "lambda1_agility", "lambda2_agility", "lambda3_agility",
                "e_max", "gamma", "stage"},
               "reward");
    get(r, "lambda_smoothing", c.reward.lambda_smoothing);
    get(r, "lambda_error", c.reward.lambda_error);
    get(r, "lambda_danger", c.reward.lambda_danger);
    get(r, "lambda1_agility", c.reward.lambda1_agility);
    get(r, "lambda2_agility", c.reward.lambda2_agility);
    get(r, "lambda3_agility", c.reward.lambda3_agility);
    get(r, "e_max", c.reward.e_max);
    get(r, "gamma", c.reward.gamma);
    if (r.contains("stage")) {
      const std::string s = r.at("stage");
      if (s == "pretrain") c.reward.stage = RewardStage::kPretrain;
      else if (s == "finetune") c.reward.stage = RewardStage::kFinetune;
      else throw ConfigError("reward.stage must be pretrain|finetune");
    }
  }

  if (j.contains("env")) {
    const auto& e = j.at("env");
    check_keys(e,
               {"policy_dt", "ctrl_dt", "time_limit", "goal_radius", "v_min",
                "v_max", "collision_check_horizon", "consumed_threshold",
                "hard_error_bound"},
               "env");
    get(e, "policy_dt", c.env.policy_dt);
    get(e, "ctrl_dt", c.env.ctrl_dt);
    get(e, "time_limit", c.env.time_limit);
    get(e, "goal_radius", c.env.goal_radius);
    get(e, "v_min", c.env.v_min);
    get(e, "v_max", c.env.v_max);
    get(e, "collision_check_horizon", c.env.collision_check_horizon);
    get(e, "consumed_threshold", c.env.consumed_threshold);
    get(e, "hard_error_bound", c.env.hard_error_bound);
  }

  if (j.contains("sac")) {
    const auto& s = j.at("sac");
    check_keys(s,
               {"gamma", "tau", "lr_actor", "lr_critic", "lr_alpha",
                "batch_size", "buffer_capacity", "alpha_per", "beta_per_start",
                "beta_per_end", "updates_per_step", "warmup_steps",
                "target_entropy", "eps_per", "init_alpha"},
               "sac");
    get(s, "gamma", c.sac.gamma);
    get(s, "tau", c.sac.tau);
    get(s, "lr_actor", c.sac.lr_actor);
    get(s, "lr_critic", c.sac.lr_critic);
    get(s, "lr_alpha", c.sac.lr_alpha);
    get(s, "batch_size", c.sac.batch_size);
    get(s, "buffer_capacity", c.sac.buffer_capacity);
    get(s, "alpha_per", c.sac.alpha_per);
    get(s, "beta_per_start", c.sac.beta_per_start);
    get(s, "beta_per_end", c.sac.beta_per_end);
    get(s, "updates_per_step", c.sac.updates_per_step);
    get(s, "warmup_steps", c.sac.warmup_steps);
    get(s, "target_entropy", c.sac.target_entropy);
    get(s, "eps_per", c.sac.eps_per);
    get(s, "init_alpha", c.sac.init_alpha);
  }

  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    check_keys(s,
               {"stage1_steps", "stage2_steps", "freeze_encoder_in_stage2",
                "curriculum_density_scales", "train_seed_base",
                "checkpoint_every"},
               "schedule");
    get(s, "stage1_steps", c.schedule.stage1_steps);
    get(s, "stage2_steps", c.schedule.stage2_steps);
    get(s, "freeze_encoder_in_stage2", c.schedule.freeze_encoder_in_stage2);
    get(s, "curriculum_density_scales", c.schedule.curriculum_density_scales);
    get(s, "train_seed_base", c.schedule.train_seed_base);
    get(s, "checkpoint_every", c.schedule.checkpoint_every);
  }

  if (j.contains("bench")) {
    const auto& b = j.at("bench");
    check_keys(b,
               {"eval_seed_base", "n_worlds", "trials_per_world",
                "start_jitter", "save_traces", "agility_sweep"},
               "bench");
    get(b, "eval_seed_base", c.bench.eval_seed_base);
    get(b, "n_worlds", c.bench.n_worlds);
    get(b, "trials_per_world", c.bench.trials_per_world);
    get(b, "start_jitter", c.bench.start_jitter);
    get(b, "save_traces", c.bench.save_traces);
    get(b, "agility_sweep", c.bench.agility_sweep);
  }

  // Fail fast on invalid sections.
  c.world.validate();
  c.sensor.validate();
  c.mapping.validate();
  c.observation.validate();
  c.planner.validate();
  c.reward.validate();
  c.env.validate();
  c.sac.validate();
  return c;
}

RunConfig RunConfig::load(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  } catch (const json::parse_error& e) {
    throw ConfigError("config parse error in " + path + ": " + e.what());
  }
  try {
    return from_json(j);
  } catch (const std::invalid_argument& e) {
    throw ConfigError("invalid config " + path + ": " + e.what());
  }
}

void RunConfig::save(const std::string& path) const {
  write_text_file(path, to_json().dump(2) + "\n");
}

}  // namespace afc
