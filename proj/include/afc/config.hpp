// Resolved run configuration: one strict-schema JSON file drives world
// generation, simulation, training and evaluation. Every artifact embeds
// the resolved snapshot so results are re-derivable from the file alone.
#pragma once

#include <nlohmann/json.hpp>

#include "afc/bench.hpp"
#include "afc/nn/policy.hpp"
#include "afc/rl/train.hpp"

namespace afc {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScheduleConfig {
  int64_t stage1_steps = 150000;
  int64_t stage2_steps = 100000;
  bool freeze_encoder_in_stage2 = true;
  std::vector<double> curriculum_density_scales = {0.6, 1.0, 1.4};
  uint64_t train_seed_base = 1000;
  int64_t checkpoint_every = 10000;
};

struct BenchSection {
  uint64_t eval_seed_base = 900000;  // disjoint from training seeds
  int n_worlds = 20;
  int trials_per_world = 10;
  double start_jitter = 0.3;
  bool save_traces = false;
  std::vector<double> agility_sweep = {1.5, 2.0, 2.5, 3.0};
};

struct RunConfig {
  uint64_t seed = 0;
  WorldSpec world;                 // regions resolved at construction
  double world_density_scale = 1.0;
  SensorSpec sensor;
  MapConfig mapping;
  ObservationConfig observation;
  DangerConfig danger;
  PlannerConfig planner;
  ControllerGains vehicle;
  RewardConfig reward;
  EnvConfig env;
  rl::SacConfig sac;
  ScheduleConfig schedule;
  BenchSection bench;

  RunConfig();  // spec defaults, regions populated

  Env make_env() const;
  nn::PolicyConfig policy_config() const;
  rl::TrainSchedule train_schedule() const;
  BenchConfig bench_config() const;
  std::vector<uint64_t> eval_world_seeds() const;

  nlohmann::json to_json() const;  // fully resolved snapshot
  static RunConfig from_json(const nlohmann::json& j);  // strict keys
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;
};

}  // namespace afc
