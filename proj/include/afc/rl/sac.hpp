// Soft actor-critic update step over the shared-encoder policy network,
// with PER importance weights and automatic entropy temperature tuning.
#pragma once

#include "afc/nn/policy.hpp"
#include "afc/rl/replay.hpp"

namespace afc::rl {

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double lr_alpha = 3e-4;
  int batch_size = 256;
  size_t buffer_capacity = 200000;
  double alpha_per = 0.6;
  double beta_per_start = 0.4, beta_per_end = 1.0;  // linear anneal
  double updates_per_step = 1.0;
  int warmup_steps = 2000;
  double target_entropy = -1.0;  // 1-D action
  double eps_per = 1e-3;
  double init_alpha = 0.2;

  void validate() const {
    if (!(gamma > 0 && gamma < 1)) throw std::invalid_argument("gamma in (0,1)");
    if (!(tau > 0 && tau <= 1)) throw std::invalid_argument("tau in (0,1]");
    if (buffer_capacity < static_cast<size_t>(batch_size))
      throw std::invalid_argument("capacity >= batch size");
  }
};

struct UpdateStats {
  double critic_loss = 0.0;
  double actor_loss = 0.0;
  double alpha = 0.0;
  double mean_q = 0.0;
  double mean_abs_td = 0.0;
  double entropy_estimate = 0.0;
};

class Adam {
 public:
  Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  // Applies the accumulated gradient of `p` and leaves it cleared.
  void step(nn::Param& p);
  // Scalar convenience (for log_alpha).
  void step_scalar(const std::string& name, double& value, double grad);

  void export_state(std::map<std::string, nn::Tensor>& out,
                    const std::string& prefix) const;
  void import_state(const std::map<std::string, nn::Tensor>& in,
                    const std::string& prefix);

 private:
  struct State {
    nn::Tensor m, v;
    int64_t t = 0;
  };
  double lr_, b1_, b2_, eps_;
  std::map<std::string, State> states_;
};

class SacLearner {
 public:
  SacLearner(nn::PolicyNet* net, const SacConfig& cfg, uint64_t seed);

  UpdateStats update(ReplayBuffer& buffer, double beta_per);

  double alpha() const { return std::exp(log_alpha_); }
  double log_alpha() const { return log_alpha_; }

  void export_state(std::map<std::string, nn::Tensor>& out) const;
  void import_state(const std::map<std::string, nn::Tensor>& in);
  std::string rng_state() const { return rng_.serialize(); }
  void set_rng_state(const std::string& s) { rng_.deserialize(s); }

 private:
  nn::PolicyNet* net_;
  SacConfig cfg_;
  Adam adam_actor_, adam_critic_, adam_alpha_;
  double log_alpha_;
  Rng rng_;
};

}  // namespace afc::rl
