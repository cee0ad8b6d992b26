// Evaluation protocol: seeded world sets, constant-agility or learned-policy
// setups, success/velocity statistics and report comparison.
#pragma once

#include "afc/env.hpp"
#include "afc/nn/policy.hpp"

namespace afc {

struct SchemaMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EvalSetup {
  std::string id;
  bool constant = true;
  double v_constant = 2.0;       // used when constant
  std::string policy_path;       // used otherwise (deterministic actor)
};

struct TrialRecord {
  uint64_t world_seed = 0;
  int trial = 0;
  bool success = false;
  TerminationReason reason = TerminationReason::kNone;
  double traversal_velocity = 0.0;  // path length / elapsed
  double elapsed = 0.0;
  double path_length = 0.0;
  double mean_v_dagger = 0.0;
  std::string trace_file;
};

struct EvalReport {
  std::string setup_id;
  std::vector<uint64_t> world_seeds;
  int trials_per_world = 0;
  uint64_t eval_seed = 0;
  int trials = 0;
  int successes = 0;
  double success_rate = 0.0;
  double mean_velocity = 0.0;  // over successful trials only
  std::map<std::string, int> termination_histogram;
  std::vector<TrialRecord> records;
  std::string config_snapshot;  // resolved run config JSON

  void save(const std::string& path) const;
  static EvalReport load(const std::string& path);
};

struct BenchConfig {
  std::vector<uint64_t> world_seeds;  // evaluation worlds (held out)
  int trials_per_world = 10;
  double start_jitter = 0.3;  // meters, per-trial start variation
  bool save_traces = false;
  std::string trace_dir;
};

// Runs every (world, trial) episode with the setup's agility source and
// aggregates. Deterministic in (setups, cfg, eval_seed).
EvalReport evaluate(Env& env, const EvalSetup& setup, const BenchConfig& cfg,
                    uint64_t eval_seed, const std::string& config_snapshot);

struct CompareResult {
  std::string table;  // human-readable
  std::string csv;    // setup,success_rate,mean_velocity per row
};

// Requires identical world sets across reports.
CompareResult compare(const std::vector<EvalReport>& reports);

}  // namespace afc
