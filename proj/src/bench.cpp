#include "afc/bench.hpp"

#include <algorithm>
#include <filesystem>
#include <nlohmann/json.hpp>
#include <sstream>

#include "afc/io.hpp"

namespace afc {

using nlohmann::json;

namespace {

json record_to_json(const TrialRecord& r) {
  return json{{"world_seed", r.world_seed},
              {"trial", r.trial},
              {"success", r.success},
              {"reason", to_string(r.reason)},
              {"traversal_velocity", r.traversal_velocity},
              {"elapsed", r.elapsed},
              {"path_length", r.path_length},
              {"mean_v_dagger", r.mean_v_dagger},
              {"trace_file", r.trace_file}};
}

TerminationReason reason_from_string(const std::string& s) {
  for (auto r : {TerminationReason::kNone, TerminationReason::kEmergencyStop,
                 TerminationReason::kCollided, TerminationReason::kPlanTimeout,
                 TerminationReason::kGoalReached, TerminationReason::kTimeLimit})
    if (s == to_string(r)) return r;
  throw CorruptFile("unknown termination reason: " + s);
}

}  // namespace

void EvalReport::save(const std::string& path) const {
  json recs = json::array();
  for (const auto& r : records) recs.push_back(record_to_json(r));
  json hist = json::object();
  for (const auto& [k, v] : termination_histogram) hist[k] = v;
  json j{{"format", "afc-eval-report"},
         {"version", 1},
         {"setup_id", setup_id},
         {"world_seeds", world_seeds},
         {"trials_per_world", trials_per_world},
         {"eval_seed", eval_seed},
         {"trials", trials},
         {"successes", successes},
         {"success_rate", success_rate},
         {"mean_velocity", mean_velocity},
         {"termination_histogram", hist},
         {"records", recs},
         {"config_snapshot", config_snapshot}};
  write_text_file(path, j.dump(2));
}

EvalReport EvalReport::load(const std::string& path) {
  json j = json::parse(read_text_file(path));
  if (j.value("format", "") != "afc-eval-report")
    throw CorruptFile("not an eval report: " + path);
  EvalReport r;
  r.setup_id = j.at("setup_id");
  r.world_seeds = j.at("world_seeds").get<std::vector<uint64_t>>();
  r.trials_per_world = j.at("trials_per_world");
  r.eval_seed = j.at("eval_seed");
  r.trials = j.at("trials");
  r.successes = j.at("successes");
  r.success_rate = j.at("success_rate");
  r.mean_velocity = j.at("mean_velocity");
  for (auto& [k, v] : j.at("termination_histogram").items())
    r.termination_histogram[k] = v;
  for (const auto& rec : j.at("records")) {
    TrialRecord t;
    t.world_seed = rec.at("world_seed");
    t.trial = rec.at("trial");
    t.success = rec.at("success");
    t.reason = reason_from_string(rec.at("reason"));
    t.traversal_velocity = rec.at("traversal_velocity");
    t.elapsed = rec.at("elapsed");
    t.path_length = rec.at("path_length");
    t.mean_v_dagger = rec.at("mean_v_dagger");
    t.trace_file = rec.at("trace_file");
    r.records.push_back(t);
  }
  r.config_snapshot = j.at("config_snapshot");
  return r;
}

EvalReport evaluate(Env& env, const EvalSetup& setup, const BenchConfig& cfg,
                    uint64_t eval_seed, const std::string& config_snapshot) {
  if (cfg.world_seeds.empty() || cfg.trials_per_world < 1)
    throw std::invalid_argument("evaluate: need worlds and trials >= 1");

  std::unique_ptr<nn::PolicyNet> policy;
  if (!setup.constant) policy = std::make_unique<nn::PolicyNet>(
      nn::PolicyNet::load(setup.policy_path));

  EvalReport report;
  report.setup_id = setup.id;
  report.world_seeds = cfg.world_seeds;
  report.trials_per_world = cfg.trials_per_world;
  report.eval_seed = eval_seed;
  report.config_snapshot = config_snapshot;

  if (cfg.save_traces && !cfg.trace_dir.empty())
    std::filesystem::create_directories(cfg.trace_dir);

  double vel_sum = 0.0;
  for (uint64_t wseed : cfg.world_seeds) {
    for (int trial = 0; trial < cfg.trials_per_world; ++trial) {
      Rng trial_rng(derive_seed(derive_seed(eval_seed, wseed), trial));
      const Vec3 jitter(0.0,
                        trial_rng.uniform(-cfg.start_jitter, cfg.start_jitter),
                        trial_rng.uniform(-0.5, 0.5) * cfg.start_jitter);

      TrialRecord rec;
      rec.world_seed = wseed;
      rec.trial = trial;
      if (cfg.save_traces && !cfg.trace_dir.empty()) {
        std::ostringstream name;
        name << cfg.trace_dir << "/trace_" << setup.id << "_" << wseed << "_"
             << trial << ".csv";
        rec.trace_file = name.str();
      }

      env.set_trace(rec.trace_file);
      Observation obs = env.reset(wseed, jitter);
      double vsum = 0.0;
      int ticks = 0;
      while (!env.terminal()) {
        double action;
        if (setup.constant)
          action = setup.v_constant;
        else
          action = policy->act(obs.flat_slices(), obs.scalars(), nullptr);
        StepResult sr = env.step(action);
        obs = std::move(sr.observation);
        vsum += action;
        ++ticks;
      }
      const EpisodeStats& st = env.stats();
      rec.success = st.reason == TerminationReason::kGoalReached;
      rec.reason = st.reason;
      rec.elapsed = st.elapsed;
      rec.path_length = st.path_length;
      rec.traversal_velocity = st.mean_speed();
      rec.mean_v_dagger = ticks ? vsum / ticks : 0.0;

      report.records.push_back(rec);
      report.trials += 1;
      report.termination_histogram[to_string(rec.reason)] += 1;
      if (rec.success) {
        report.successes += 1;
        vel_sum += rec.traversal_velocity;
      }
    }
  }
  report.success_rate =
      report.trials ? static_cast<double>(report.successes) / report.trials : 0.0;
  report.mean_velocity = report.successes ? vel_sum / report.successes : 0.0;

  // Order-independent output: sort records by (world, trial).
  std::sort(report.records.begin(), report.records.end(),
            [](const TrialRecord& a, const TrialRecord& b) {
              return a.world_seed != b.world_seed ? a.world_seed < b.world_seed
                                                  : a.trial < b.trial;
            });
  return report;
}

CompareResult compare(const std::vector<EvalReport>& reports) {
  if (reports.size() < 2)
    throw std::invalid_argument("compare: need at least 2 reports");
  for (size_t i = 1; i < reports.size(); ++i)
    if (reports[i].world_seeds != reports[0].world_seeds)
      throw SchemaMismatch("reports evaluated on different world sets");

  std::ostringstream table, csv;
  csv << "setup,trials,success_rate,mean_velocity\n";
  table << "setup                    trials  success  mean_vel(m/s)\n";
  for (const auto& r : reports) {
    csv << r.setup_id << ',' << r.trials << ',' << r.success_rate << ','
        << r.mean_velocity << '\n';
    std::ostringstream row;
    row << r.setup_id;
    std::string id = row.str();
    id.resize(24, ' ');
    table << id << ' ' << r.trials << "      " << r.success_rate << "    "
          << r.mean_velocity << '\n';
  }
  return {table.str(), csv.str()};
}

}  // namespace afc
