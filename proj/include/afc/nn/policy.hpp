// Actor-critic architecture: shared CNN encoder (4 conv layers) + MLP fusion
// to 64 units, a squashed-Gaussian actor head and twin critic heads with
// Polyak-averaged target copies. All parameters are doubles.
#pragma once

#include <map>

#include "afc/nn/autodiff.hpp"
#include "afc/rng.hpp"

namespace afc::nn {

struct PolicyConfig {
  int k_slices = 5;
  int slice_size = 32;
  int scalar_dim = 7;
  double v_min = 0.5, v_max = 3.5;
  double log_std_min = -5.0, log_std_max = 2.0;
  uint64_t init_seed = 0;

  double v_mid() const { return 0.5 * (v_min + v_max); }
  double v_half() const { return 0.5 * (v_max - v_min); }
};

struct Param {
  std::string name;
  Var var;
  bool encoder = false;  // encoder + fusion group (frozen in stage 2)
};

struct ActorSample {
  Var action;       // [B,1], squashed into [v_min, v_max]
  Var log_prob;     // [B,1]
  Tensor mean_action;  // deterministic squashed mean, [B,1]
};

class PolicyNet {
 public:
  explicit PolicyNet(const PolicyConfig& cfg);

  const PolicyConfig& config() const { return cfg_; }

  // slices [B, K, S, S], scalars [B, scalar_dim] -> fused features [B, 64].
  Var encode(const Tensor& slices, const Tensor& scalars);

  // eps [B,1] standard-normal draws (reparameterization constants).
  ActorSample actor_sample(const Var& enc, const Tensor& eps);

  Var critic(int which, const Var& enc, const Var& action, bool target = false);

  // Single-observation convenience. rng == nullptr -> deterministic mean.
  double act(const std::vector<double>& slices_flat,
             const std::vector<double>& scalars, Rng* rng);

  void freeze_encoder();
  bool encoder_frozen() const { return frozen_; }

  void copy_targets_from_online();
  void polyak_update(double tau);

  std::vector<Param>& parameters() { return params_; }
  std::vector<Param>& target_parameters() { return target_params_; }

  void save(const std::string& path,
            const std::string& extra_meta_json = "{}") const;
  static PolicyNet load(const std::string& path, std::string* meta_out = nullptr);

 private:
  Param* find(const std::string& name);
  const Param* find(const std::string& name) const;
  Var p(const std::string& name) { return find(name)->var; }

  PolicyConfig cfg_;
  std::vector<Param> params_;         // online (encoder + heads)
  std::vector<Param> target_params_;  // critic head copies
  bool frozen_ = false;
};

// Generic versioned tensor container (also used by train checkpoints).
void save_tensor_map(std::ostream& os, const std::string& meta_json,
                     const std::map<std::string, Tensor>& tensors);
void save_tensor_map(const std::string& path, const std::string& meta_json,
                     const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_tensor_map(std::istream& is,
                                              std::string* meta_json);
std::map<std::string, Tensor> load_tensor_map(const std::string& path,
                                              std::string* meta_json);

}  // namespace afc::nn
