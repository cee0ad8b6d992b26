// afc: agility-adaptive flight simulator + trainer CLI.
// Exit codes: 0 ok, 1 usage error, 2 runtime/config error.
#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "afc/config.hpp"
#include "afc/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

afc::RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return afc::RunConfig{};
  return afc::RunConfig::load(path);
}

int cmd_world_gen(const std::string& config_path, uint64_t seed,
                  const std::string& out) {
  afc::RunConfig cfg = load_config_or_default(config_path);
  afc::WorldSpec spec = cfg.world;
  spec.seed = seed;
  afc::GroundTruth gt = afc::generate(spec);
  afc::save_world(gt, out);
  std::cout << "world seed=" << seed << " obstacles=" << gt.primitives.size()
            << " -> " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, uint64_t seed, bool resume,
              std::string run_dir, const std::string& variant) {
  afc::RunConfig cfg = load_config_or_default(config_path);
  cfg.seed = seed;
  if (run_dir.empty()) run_dir = "runs/train_seed" + std::to_string(seed);
  fs::create_directories(run_dir);

  afc::rl::TrainSchedule sched = cfg.train_schedule();
  if (variant == "stage1-only") {
    sched.stage1_steps = sched.total_steps();
    sched.stage2_steps = 0;
  } else if (variant == "sparse-only") {
    sched.stage2_steps = sched.total_steps();
    sched.stage1_steps = 0;
    sched.freeze_encoder_in_stage2 = false;
  } else if (variant != "full") {
    throw afc::ConfigError("unknown variant: " + variant);
  }

  cfg.save(run_dir + "/resolved_config.json");
  afc::rl::Trainer trainer(cfg.make_env(), cfg.policy_config(), cfg.sac,
                           sched, seed, run_dir);
  afc::rl::TrainResult res = trainer.run(resume);
  std::cout << "trained " << trainer.env_step() << " env steps, "
            << res.episodes.size() << " episodes -> " << res.final_policy_path
            << "\n";
  return 0;
}

int cmd_bench_sweep(const std::string& config_path, const std::string& agility,
                    std::string out_dir, uint64_t eval_seed) {
  afc::RunConfig cfg = load_config_or_default(config_path);
  if (out_dir.empty()) out_dir = "runs/sweep";
  fs::create_directories(out_dir);

  std::vector<double> levels = cfg.bench.agility_sweep;
  if (!agility.empty()) {
    levels.clear();
    std::stringstream ss(agility);
    std::string tok;
    while (std::getline(ss, tok, ',')) levels.push_back(std::stod(tok));
  }

  afc::Env env = cfg.make_env();
  afc::BenchConfig bc = cfg.bench_config();
  if (bc.save_traces) bc.trace_dir = out_dir + "/traces";
  const std::string snapshot = cfg.to_json().dump();

  std::vector<afc::EvalReport> reports;
  for (double v : levels) {
    afc::EvalSetup setup;
    std::ostringstream id;
    id << "const_" << v;
    setup.id = id.str();
    setup.constant = true;
    setup.v_constant = v;
    afc::EvalReport r = afc::evaluate(env, setup, bc, eval_seed, snapshot);
    r.save(out_dir + "/report_" + setup.id + ".json");
    std::cout << setup.id << ": success " << r.success_rate << ", mean vel "
              << r.mean_velocity << "\n";
    reports.push_back(std::move(r));
  }
  if (reports.size() >= 2) {
    afc::CompareResult cr = afc::compare(reports);
    afc::write_text_file(out_dir + "/sweep_summary.csv", cr.csv);
    afc::write_text_file(out_dir + "/sweep_summary.txt", cr.table);
    std::cout << cr.table;
  }
  return 0;
}

int cmd_bench_eval(const std::string& config_path, const std::string& policy,
                   const std::string& out, const std::string& id,
                   uint64_t eval_seed) {
  afc::RunConfig cfg = load_config_or_default(config_path);
  afc::Env env = cfg.make_env();
  afc::BenchConfig bc = cfg.bench_config();
  if (bc.save_traces) bc.trace_dir = fs::path(out).parent_path().string() + "/traces";

  afc::EvalSetup setup;
  setup.id = id.empty() ? fs::path(policy).stem().string() : id;
  setup.constant = false;
  setup.policy_path = policy;
  afc::EvalReport r =
      afc::evaluate(env, setup, bc, eval_seed, cfg.to_json().dump());
  if (!out.empty()) r.save(out);
  std::cout << setup.id << ": success " << r.success_rate << ", mean vel "
            << r.mean_velocity << "\n";
  return 0;
}

int cmd_bench_compare(const std::vector<std::string>& report_paths,
                      const std::string& out_prefix) {
  std::vector<afc::EvalReport> reports;
  for (const auto& p : report_paths) reports.push_back(afc::EvalReport::load(p));
  afc::CompareResult cr = afc::compare(reports);
  std::cout << cr.table;
  if (!out_prefix.empty()) {
    afc::write_text_file(out_prefix + ".csv", cr.csv);
    afc::write_text_file(out_prefix + ".txt", cr.table);
  }
  return 0;
}

int cmd_replay_export(const std::string& trace, const std::string& out) {
  std::ifstream f(trace);
  if (!f) throw afc::IoError("cannot open trace: " + trace);
  std::ofstream o(out, std::ios::trunc);
  if (!o) throw afc::IoError("cannot open output: " + out);
  std::string line;
  if (!std::getline(f, line)) throw afc::CorruptFile("empty trace: " + trace);
  o << "t,px,py,pz,vx,vy,vz\n";
  while (std::getline(f, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 7) continue;
    for (int i = 0; i < 7; ++i) o << cells[i] << (i + 1 < 7 ? "," : "");
    o << "\n";
  }
  return 0;
}

int cmd_policy_inspect(const std::string& path) {
  std::string meta;
  auto tensors = afc::nn::load_tensor_map(path, &meta);
  json m = json::parse(meta);
  std::cout << "checkpoint: " << path << "\n";
  std::cout << "meta: " << m.dump(2) << "\n";
  int64_t total = 0;
  for (const auto& [name, t] : tensors) {
    std::cout << "  " << name << " " << t.shape_str() << " (" << t.numel()
              << ")\n";
    total += t.numel();
  }
  std::cout << "total parameters: " << total << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"agility-adaptive flight simulator and trainer"};
  app.require_subcommand(1);

  std::string config_path, out, out_dir, run_dir, trace_path, policy_path, id;
  std::string agility, variant = "full", out_prefix;
  std::vector<std::string> report_paths;
  uint64_t seed = 0, eval_seed = 7;
  bool resume = false;

  auto* world = app.add_subcommand("world", "world generation");
  auto* world_gen = world->add_subcommand("gen", "generate a world file");
  world_gen->add_option("--seed", seed, "world seed")->required();
  world_gen->add_option("--out", out, "output file")->required();
  world_gen->add_option("--config", config_path, "run config JSON");

  auto* train = app.add_subcommand("train", "train the agility policy");
  train->add_option("--config", config_path, "run config JSON");
  train->add_option("--seed", seed, "training seed");
  train->add_option("--run-dir", run_dir, "output directory");
  train->add_option("--variant", variant,
                    "full | stage1-only | sparse-only (ablations)");
  train->add_flag("--resume", resume, "resume from run-dir/resume.ckpt");

  auto* bench = app.add_subcommand("bench", "evaluation protocol");
  auto* sweep = bench->add_subcommand("sweep", "constant-agility sweep");
  sweep->add_option("--config", config_path, "run config JSON");
  sweep->add_option("--agility", agility, "comma-separated agility levels");
  sweep->add_option("--out-dir", out_dir, "report directory");
  sweep->add_option("--seed", eval_seed, "evaluation seed");

  auto* beval = bench->add_subcommand("eval", "evaluate a trained policy");
  beval->add_option("--config", config_path, "run config JSON");
  beval->add_option("--policy", policy_path, "policy checkpoint")->required();
  beval->add_option("--out", out, "report output file");
  beval->add_option("--id", id, "setup id in the report");
  beval->add_option("--seed", eval_seed, "evaluation seed");

  auto* bcomp = bench->add_subcommand("compare", "compare eval reports");
  bcomp->add_option("reports", report_paths, "report JSON files")
      ->expected(-2);
  bcomp->add_option("--out-prefix", out_prefix, "write .csv/.txt outputs");

  auto* replay = app.add_subcommand("replay", "trace utilities");
  auto* rexport = replay->add_subcommand("export", "export (t,p,v) rows");
  rexport->add_option("--trace", trace_path, "episode trace CSV")->required();
  rexport->add_option("--out", out, "output CSV")->required();

  auto* policy = app.add_subcommand("policy", "checkpoint utilities");
  auto* pinspect = policy->add_subcommand("inspect", "print checkpoint info");
  pinspect->add_option("checkpoint", policy_path, "checkpoint file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 1;
  }

  try {
    if (world_gen->parsed()) return cmd_world_gen(config_path, seed, out);
    if (train->parsed())
      return cmd_train(config_path, seed, resume, run_dir, variant);
    if (sweep->parsed())
      return cmd_bench_sweep(config_path, agility, out_dir, eval_seed);
    if (beval->parsed())
      return cmd_bench_eval(config_path, policy_path, out, id, eval_seed);
    if (bcomp->parsed()) return cmd_bench_compare(report_paths, out_prefix);
    if (rexport->parsed()) return cmd_replay_export(trace_path, out);
    if (pinspect->parsed()) return cmd_policy_inspect(policy_path);
    std::cerr << "error: no subcommand\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
