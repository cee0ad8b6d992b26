// Two-stage training pipeline: dense shaped agility reward first, then the
// objective reward with the encoder frozen. Resumable, reproducible per seed.
#pragma once

#include <filesystem>

#include "afc/rl/sac.hpp"

namespace afc::rl {

struct TrainSchedule {
  int64_t stage1_steps = 150000;  // shaped-reward pre-training
  int64_t stage2_steps = 100000;  // objective reward, encoder frozen
  bool freeze_encoder_in_stage2 = true;
  std::vector<WorldSpec> curriculum;  // cycled per episode (seeds injected)
  uint64_t train_seed_base = 0;       // episode world seeds start here
  int64_t checkpoint_every = 10000;
  int64_t log_every_episodes = 1;

  int64_t total_steps() const { return stage1_steps + stage2_steps; }
  void validate() const {
    if (curriculum.empty()) throw std::invalid_argument("curriculum empty");
    if (stage1_steps < 0 || stage2_steps < 0)
      throw std::invalid_argument("negative stage budgets");
  }
};

struct EpisodeRecord {
  int64_t episode = 0;
  int64_t env_step_end = 0;
  double return_sum = 0.0;
  int length = 0;
  TerminationReason reason = TerminationReason::kNone;
  double mean_v_dagger = 0.0;
  double mean_speed = 0.0;
  int stage = 1;
};

struct TrainResult {
  std::vector<EpisodeRecord> episodes;
  std::vector<double> critic_losses;  // per update, for determinism checks
  std::string final_policy_path;
};

class Trainer {
 public:
  // env_template is copied per episode; its world spec is replaced from the
  // curriculum with a seed drawn from the trainer stream.
  Trainer(Env env_template, nn::PolicyConfig policy_cfg, SacConfig sac_cfg,
          TrainSchedule schedule, uint64_t seed, std::string run_dir);

  // Start (or resume, if resume.ckpt exists and resume=true) and train to
  // the schedule end. Returns per-episode metrics.
  TrainResult run(bool resume = false);

  nn::PolicyNet& net() { return *net_; }
  int64_t env_step() const { return env_step_; }

 private:
  void save_resume_checkpoint();
  bool load_resume_checkpoint();
  void save_policy(const std::string& name) const;
  void append_metrics(const EpisodeRecord& r);
  double beta_per() const;
  RewardStage stage_of(int64_t step) const {
    return step < schedule_.stage1_steps ? RewardStage::kPretrain
                                         : RewardStage::kFinetune;
  }

  Env env_;
  nn::PolicyConfig policy_cfg_;
  SacConfig sac_cfg_;
  TrainSchedule schedule_;
  uint64_t seed_;
  std::string run_dir_;

  std::unique_ptr<nn::PolicyNet> net_;
  std::unique_ptr<SacLearner> learner_;
  std::unique_ptr<ReplayBuffer> buffer_;
  Rng episode_rng_;
  Rng action_rng_;
  int64_t env_step_ = 0;
  int64_t episode_count_ = 0;
  double update_accum_ = 0.0;
  bool stage2_entered_ = false;
};

}  // namespace afc::rl
