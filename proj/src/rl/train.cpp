#include "afc/rl/train.hpp"

#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "afc/io.hpp"

namespace afc::rl {

namespace fs = std::filesystem;
using nlohmann::json;

Trainer::Trainer(Env env_template, nn::PolicyConfig policy_cfg, SacConfig sac_cfg,
                 TrainSchedule schedule, uint64_t seed, std::string run_dir)
    : env_(std::move(env_template)),
      policy_cfg_(policy_cfg),
      sac_cfg_(sac_cfg),
      schedule_(std::move(schedule)),
      seed_(seed),
      run_dir_(std::move(run_dir)),
      episode_rng_(derive_seed(seed, 0xE915u)),
      action_rng_(derive_seed(seed, 0xAC70u)) {
  schedule_.validate();
  sac_cfg_.validate();
  fs::create_directories(run_dir_);
  policy_cfg_.init_seed = seed;
  net_ = std::make_unique<nn::PolicyNet>(policy_cfg_);
  learner_ = std::make_unique<SacLearner>(net_.get(), sac_cfg_, seed);
  buffer_ = std::make_unique<ReplayBuffer>(sac_cfg_.buffer_capacity,
                                           env_.observation_config(),
                                           sac_cfg_.alpha_per, sac_cfg_.eps_per);
}

double Trainer::beta_per() const {
  const double frac =
      std::clamp(static_cast<double>(env_step_) /
                     std::max<int64_t>(schedule_.total_steps(), 1),
                 0.0, 1.0);
  return sac_cfg_.beta_per_start +
         (sac_cfg_.beta_per_end - sac_cfg_.beta_per_start) * frac;
}

void Trainer::append_metrics(const EpisodeRecord& r) {
  const std::string path = run_dir_ + "/metrics.csv";
  const bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
  std::ofstream f(path, std::ios::app);
  if (fresh)
    f << "episode,env_step,return,length,termination,mean_v_dagger,"
         "mean_speed,stage\n";
  f << r.episode << ',' << r.env_step_end << ',' << r.return_sum << ','
    << r.length << ',' << to_string(r.reason) << ',' << r.mean_v_dagger << ','
    << r.mean_speed << ',' << r.stage << '\n';
}

void Trainer::save_policy(const std::string& name) const {
  json extra{{"env_step", env_step_},
             {"episodes", episode_count_},
             {"seed", seed_}};
  net_->save(run_dir_ + "/" + name, extra.dump());
}

void Trainer::save_resume_checkpoint() {
  std::map<std::string, nn::Tensor> m;
  for (const auto& p : net_->parameters()) m.emplace(p.name, p.var.value());
  for (const auto& p : net_->target_parameters())
    m.emplace(p.name, p.var.value());
  learner_->export_state(m);

  json meta{{"kind", "resume"},
            {"env_step", env_step_},
            {"episodes", episode_count_},
            {"update_accum", update_accum_},
            {"stage2_entered", stage2_entered_},
            {"seed", seed_},
            {"episode_rng", episode_rng_.serialize()},
            {"action_rng", action_rng_.serialize()},
            {"learner_rng", learner_->rng_state()}};

  const std::string tmp = run_dir_ + "/resume.ckpt.tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint: " + tmp);
    nn::save_tensor_map(f, meta.dump(), m);
    std::ostringstream buf;
    buffer_->serialize(buf);
    const std::string blob = buf.str();
    write_pod<uint64_t>(f, blob.size());
    write_bytes(f, blob.data(), blob.size());
    if (!f) throw IoError("checkpoint write failed: " + tmp);
  }
  fs::rename(tmp, run_dir_ + "/resume.ckpt");
}

bool Trainer::load_resume_checkpoint() {
  const std::string path = run_dir_ + "/resume.ckpt";
  if (!fs::exists(path)) return false;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string meta_str;
  auto m = nn::load_tensor_map(f, &meta_str);
  json meta = json::parse(meta_str);
  if (meta.value("kind", "") != "resume")
    throw CorruptFile("not a resume checkpoint: " + path);

  env_step_ = meta.at("env_step");
  episode_count_ = meta.at("episodes");
  update_accum_ = meta.at("update_accum");
  stage2_entered_ = meta.at("stage2_entered");
  episode_rng_.deserialize(meta.at("episode_rng"));
  action_rng_.deserialize(meta.at("action_rng"));
  learner_->set_rng_state(meta.at("learner_rng"));

  if (stage2_entered_ && schedule_.freeze_encoder_in_stage2)
    net_->freeze_encoder();

  for (auto& p : net_->parameters()) {
    auto it = m.find(p.name);
    if (it == m.end()) throw CorruptFile("missing parameter " + p.name);
    p.var.mutable_value() = it->second;
  }
  for (auto& p : net_->target_parameters()) {
    auto it = m.find(p.name);
    if (it == m.end()) throw CorruptFile("missing parameter " + p.name);
    p.var.mutable_value() = it->second;
  }
  learner_->import_state(m);

  const auto blob_size = read_pod<uint64_t>(f);
  std::string blob(blob_size, '\0');
  read_bytes(f, blob.data(), blob_size);
  std::istringstream bs(blob);
  buffer_->deserialize(bs);
  return true;
}

TrainResult Trainer::run(bool resume) {
  TrainResult result;
  if (resume) load_resume_checkpoint();

  const int64_t total = schedule_.total_steps();
  Observation obs;
  bool in_episode = false;
  double ep_return = 0.0, ep_vsum = 0.0;
  int ep_len = 0;
  int64_t last_ckpt_step = env_step_;

  while (env_step_ < total) {
    if (!stage2_entered_ && env_step_ >= schedule_.stage1_steps &&
        schedule_.stage2_steps > 0) {
      stage2_entered_ = true;
      if (schedule_.freeze_encoder_in_stage2) net_->freeze_encoder();
      env_.set_reward_stage(RewardStage::kFinetune);
      save_policy("policy_stage1.bin");
      in_episode = false;  // restart under the new reward stage
    }

    if (!in_episode) {
      env_.set_reward_stage(stage_of(env_step_));
      const size_t wi =
          episode_rng_.uniform_index(schedule_.curriculum.size());
      WorldSpec spec = schedule_.curriculum[wi];
      env_.set_world_spec(spec);
      bool ok = false;
      for (int attempt = 0; attempt < 8 && !ok; ++attempt) {
        const uint64_t wseed =
            derive_seed(schedule_.train_seed_base, episode_rng_.next_u64());
        try {
          obs = env_.reset(wseed);
          ok = true;
        } catch (const ConnectivityFailure&) {
        }
      }
      if (!ok) throw ConnectivityFailure("curriculum world generation failed");
      ep_return = 0.0;
      ep_vsum = 0.0;
      ep_len = 0;
      in_episode = true;
    }

    double action;
    if (env_step_ < sac_cfg_.warmup_steps)
      action = action_rng_.uniform(env_.config().v_min, env_.config().v_max);
    else
      action = net_->act(obs.flat_slices(), obs.scalars(), &action_rng_);

    StepResult sr = env_.step(action);
    const bool truncation = sr.reason == TerminationReason::kTimeLimit;
    buffer_->push(obs, action, sr.reward, sr.observation,
                  sr.terminal && !truncation);
    obs = sr.observation;
    ep_return += sr.reward;
    ep_vsum += action;
    ++ep_len;
    ++env_step_;

    if (env_step_ >= sac_cfg_.warmup_steps &&
        buffer_->size() >= static_cast<size_t>(sac_cfg_.batch_size)) {
      update_accum_ += sac_cfg_.updates_per_step;
      while (update_accum_ >= 1.0) {
        const UpdateStats st = learner_->update(*buffer_, beta_per());
        result.critic_losses.push_back(st.critic_loss);
        update_accum_ -= 1.0;
      }
    }

    if (sr.terminal || env_step_ >= total) {
      ++episode_count_;
      EpisodeRecord r;
      r.episode = episode_count_;
      r.env_step_end = env_step_;
      r.return_sum = ep_return;
      r.length = ep_len;
      r.reason = sr.reason;
      r.mean_v_dagger = ep_len ? ep_vsum / ep_len : 0.0;
      r.mean_speed = env_.stats().mean_speed();
      r.stage = stage_of(env_step_ - 1) == RewardStage::kPretrain ? 1 : 2;
      append_metrics(r);
      result.episodes.push_back(r);
      in_episode = false;

      if (env_step_ - last_ckpt_step >= schedule_.checkpoint_every) {
        save_resume_checkpoint();
        last_ckpt_step = env_step_;
      }
    }
  }

  save_policy("policy_final.bin");
  save_resume_checkpoint();
  result.final_policy_path = run_dir_ + "/policy_final.bin";
  return result;
}

}  // namespace afc::rl
