#include "afc/rl/sac.hpp"

namespace afc::rl {

using nn::Tensor;
using nn::Var;

void Adam::step(nn::Param& p) {
  if (!p.var.requires_grad()) return;
  const Tensor& g = p.var.grad();
  if (g.numel() != p.var.value().numel()) return;  // no gradient this pass
  State& s = states_[p.name];
  if (s.m.numel() != g.numel()) {
    s.m = Tensor(g.shape());
    s.v = Tensor(g.shape());
    s.t = 0;
  }
  ++s.t;
  Tensor& val = p.var.mutable_value();
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(s.t));
  for (int64_t i = 0; i < g.numel(); ++i) {
    s.m[i] = b1_ * s.m[i] + (1.0 - b1_) * g[i];
    s.v[i] = b2_ * s.v[i] + (1.0 - b2_) * g[i] * g[i];
    val[i] -= lr_ * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + eps_);
  }
  p.var.zero_grad();
}

void Adam::step_scalar(const std::string& name, double& value, double grad) {
  State& s = states_[name];
  if (s.m.numel() != 1) {
    s.m = Tensor({1});
    s.v = Tensor({1});
    s.t = 0;
  }
  ++s.t;
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(s.t));
  s.m[0] = b1_ * s.m[0] + (1.0 - b1_) * grad;
  s.v[0] = b2_ * s.v[0] + (1.0 - b2_) * grad * grad;
  value -= lr_ * (s.m[0] / bc1) / (std::sqrt(s.v[0] / bc2) + eps_);
}

void Adam::export_state(std::map<std::string, Tensor>& out,
                        const std::string& prefix) const {
  for (const auto& [name, s] : states_) {
    out.emplace(prefix + name + "/m", s.m);
    out.emplace(prefix + name + "/v", s.v);
    out.emplace(prefix + name + "/t",
                Tensor({1}, {static_cast<double>(s.t)}));
  }
}

void Adam::import_state(const std::map<std::string, Tensor>& in,
                        const std::string& prefix) {
  states_.clear();
  for (const auto& [name, t] : in) {
    if (name.rfind(prefix, 0) != 0) continue;
    const std::string rest = name.substr(prefix.size());
    const auto slash = rest.rfind('/');
    const std::string pname = rest.substr(0, slash);
    const std::string leaf = rest.substr(slash + 1);
    State& s = states_[pname];
    if (leaf == "m") s.m = t;
    else if (leaf == "v") s.v = t;
    else if (leaf == "t") s.t = static_cast<int64_t>(t[0]);
  }
}

SacLearner::SacLearner(nn::PolicyNet* net, const SacConfig& cfg, uint64_t seed)
    : net_(net),
      cfg_(cfg),
      adam_actor_(cfg.lr_actor),
      adam_critic_(cfg.lr_critic),
      adam_alpha_(cfg.lr_alpha),
      log_alpha_(std::log(cfg.init_alpha)),
      rng_(derive_seed(seed, 0x5AC0u)) {
  cfg.validate();
}

UpdateStats SacLearner::update(ReplayBuffer& buffer, double beta_per) {
  if (buffer.size() < static_cast<size_t>(cfg_.batch_size))
    throw BufferUnderflow("replay smaller than batch size");
  UpdateStats st;
  const int B = cfg_.batch_size;
  Batch batch = buffer.sample(B, beta_per, rng_);
  const double alpha = std::exp(log_alpha_);

  // ---- critic targets (no graph) ----
  std::vector<double> y(B);
  {
    nn::NoGradGuard ng;
    Var enc_next = net_->encode(batch.next_slices, batch.next_scalars);
    Tensor eps({B, 1});
    for (int i = 0; i < B; ++i) eps[i] = rng_.normal();
    nn::ActorSample next = net_->actor_sample(enc_next, eps);
    Var q1t = net_->critic(1, enc_next, next.action, /*target=*/true);
    Var q2t = net_->critic(2, enc_next, next.action, /*target=*/true);
    for (int i = 0; i < B; ++i) {
      const double qmin = std::min(q1t.value()[i], q2t.value()[i]);
      const double soft = qmin - alpha * next.log_prob.value()[i];
      y[static_cast<size_t>(i)] =
          batch.rewards[static_cast<size_t>(i)] +
          cfg_.gamma * (batch.dones[static_cast<size_t>(i)] ? 0.0 : soft);
    }
  }

  // ---- critic update (drives the shared encoder) ----
  Var enc = net_->encode(batch.slices, batch.scalars);
  Var act_buf(batch.actions, false);
  Var q1 = net_->critic(1, enc, act_buf);
  Var q2 = net_->critic(2, enc, act_buf);
  Tensor y_t({B, 1}, std::vector<double>(y));
  Tensor w_t({B, 1});
  for (int i = 0; i < B; ++i) w_t[i] = batch.weights[static_cast<size_t>(i)];
  Var yv(y_t, false);
  Var wv(w_t, false);
  Var td1 = sub(q1, yv);
  Var td2 = sub(q2, yv);
  Var critic_loss =
      mean_all(mul(wv, add(square(td1), square(td2))));
  st.critic_loss = critic_loss.value()[0];
  for (auto& par : net_->parameters()) par.var.zero_grad();
  nn::backward(critic_loss);
  for (auto& par : net_->parameters())
    if (par.name.rfind("actor", 0) != 0) adam_critic_.step(par);

  // ---- priorities from TD errors ----
  std::vector<double> td(B);
  for (int i = 0; i < B; ++i)
    td[static_cast<size_t>(i)] =
        0.5 * (std::abs(td1.value()[i]) + std::abs(td2.value()[i]));
  buffer.update_priorities(batch.indices, td);
  for (double v : td) st.mean_abs_td += v / B;
  for (int i = 0; i < B; ++i)
    st.mean_q += 0.5 * (q1.value()[i] + q2.value()[i]) / B;

  // ---- actor update (encoder detached; heads only) ----
  Var enc_det = enc.detach();
  Tensor eps({B, 1});
  for (int i = 0; i < B; ++i) eps[i] = rng_.normal();
  nn::ActorSample cur = net_->actor_sample(enc_det, eps);
  Var qa = min_elem(net_->critic(1, enc_det, cur.action),
                    net_->critic(2, enc_det, cur.action));
  Var actor_loss = mean_all(sub(scale(cur.log_prob, alpha), qa));
  st.actor_loss = actor_loss.value()[0];
  for (auto& par : net_->parameters()) par.var.zero_grad();
  nn::backward(actor_loss);
  for (auto& par : net_->parameters())
    if (par.name.rfind("actor", 0) == 0) adam_actor_.step(par);

  // ---- temperature update toward the target entropy ----
  double mean_logp = 0.0;
  for (int i = 0; i < B; ++i) mean_logp += cur.log_prob.value()[i] / B;
  st.entropy_estimate = -mean_logp;
  const double alpha_grad =
      -std::exp(log_alpha_) * (mean_logp + cfg_.target_entropy);
  adam_alpha_.step_scalar("log_alpha", log_alpha_, alpha_grad);
  st.alpha = std::exp(log_alpha_);

  net_->polyak_update(cfg_.tau);
  return st;
}

void SacLearner::export_state(std::map<std::string, Tensor>& out) const {
  adam_actor_.export_state(out, "adam_actor/");
  adam_critic_.export_state(out, "adam_critic/");
  adam_alpha_.export_state(out, "adam_alpha/");
  out.emplace("log_alpha", Tensor({1}, {log_alpha_}));
}

void SacLearner::import_state(const std::map<std::string, Tensor>& in) {
  adam_actor_.import_state(in, "adam_actor/");
  adam_critic_.import_state(in, "adam_critic/");
  adam_alpha_.import_state(in, "adam_alpha/");
  auto it = in.find("log_alpha");
  if (it != in.end()) log_alpha_ = it->second[0];
}

}  // namespace afc::rl
