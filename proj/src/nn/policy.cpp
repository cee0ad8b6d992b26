#include "afc/nn/policy.hpp"

#include <nlohmann/json.hpp>

#include "afc/io.hpp"

namespace afc::nn {

namespace {

constexpr uint32_t kMagic = 0x4146434Eu;  // "AFCN"
constexpr uint32_t kVersion = 1;
constexpr double kLog2Pi = 1.8378770664093453;
constexpr double kLn2 = 0.6931471805599453;

// Conv stack: [out_channels, kernel, stride, pad] per layer; layer 1 input
// channels = K slices.
constexpr int kConv[4][4] = {{5, 5, 3, 2}, {32, 3, 2, 1}, {48, 3, 2, 1}, {64, 3, 1, 0}};
constexpr int kFusionOut = 64;
constexpr int kHidden0 = 64, kHidden1 = 32;

Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / std::max(fan_in, 1));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

}  // namespace

PolicyNet::PolicyNet(const PolicyConfig& cfg) : cfg_(cfg) {
  Rng rng(derive_seed(cfg.init_seed, 0x6E6574u));
  auto add = [&](const std::string& name, Tensor t, bool encoder) {
    params_.push_back({name, Var(std::move(t), true), encoder});
  };

  int in_c = cfg.k_slices;
  int size = cfg.slice_size;
  for (int l = 0; l < 4; ++l) {
    const int oc = kConv[l][0], k = kConv[l][1], s = kConv[l][2], p = kConv[l][3];
    add("conv" + std::to_string(l + 1) + "/w",
        kaiming_uniform({oc, in_c, k, k}, in_c * k * k, rng), true);
    add("conv" + std::to_string(l + 1) + "/b", Tensor({oc}), true);
    size = conv_out_size(size, k, s, p);
    if (size <= 0)
      throw ShapeMismatch("slice_size too small for the conv stack");
    in_c = oc;
  }
  const int flat = in_c * size * size;
  add("fusion/w",
      kaiming_uniform({flat + cfg.scalar_dim, kFusionOut},
                      flat + cfg.scalar_dim, rng),
      true);
  add("fusion/b", Tensor({kFusionOut}), true);

  auto add_mlp = [&](const std::string& prefix, int in, int out) {
    add(prefix + "/w1", kaiming_uniform({in, kHidden0}, in, rng), false);
    add(prefix + "/b1", Tensor({kHidden0}), false);
    add(prefix + "/w2", kaiming_uniform({kHidden0, kHidden1}, kHidden0, rng), false);
    add(prefix + "/b2", Tensor({kHidden1}), false);
    add(prefix + "/w3", kaiming_uniform({kHidden1, out}, kHidden1, rng), false);
    add(prefix + "/b3", Tensor({out}), false);
  };
  add_mlp("actor", kFusionOut, 2);            // mean, raw log_std
  add_mlp("critic1", kFusionOut + 1, 1);      // fused features + action
  add_mlp("critic2", kFusionOut + 1, 1);

  for (const auto& par : params_) {
    if (par.name.rfind("critic", 0) == 0)
      target_params_.push_back({"target/" + par.name, Var(par.var.value(), false),
                                false});
  }
}

Param* PolicyNet::find(const std::string& name) {
  for (auto& par : params_)
    if (par.name == name) return &par;
  for (auto& par : target_params_)
    if (par.name == name) return &par;
  throw std::logic_error("unknown parameter: " + name);
}

const Param* PolicyNet::find(const std::string& name) const {
  return const_cast<PolicyNet*>(this)->find(name);
}

Var PolicyNet::encode(const Tensor& slices, const Tensor& scalars) {
  if (slices.ndim() != 4 || slices.dim(1) != cfg_.k_slices ||
      slices.dim(2) != cfg_.slice_size || slices.dim(3) != cfg_.slice_size)
    throw ShapeMismatch("encode: slices shape " + slices.shape_str());
  if (scalars.ndim() != 2 || scalars.dim(1) != cfg_.scalar_dim ||
      scalars.dim(0) != slices.dim(0))
    throw ShapeMismatch("encode: scalars shape " + scalars.shape_str());

  Var h(slices, false);
  for (int l = 0; l < 4; ++l) {
    const std::string tag = "conv" + std::to_string(l + 1);
    h = relu(conv2d(h, p(tag + "/w"), p(tag + "/b"), kConv[l][2], kConv[l][3]));
  }
  Var flat = flatten2(h);
  Var joined = concat_cols(flat, Var(scalars, false));
  return relu(linear(joined, p("fusion/w"), p("fusion/b")));
}

ActorSample PolicyNet::actor_sample(const Var& enc, const Tensor& eps) {
  Var h = relu(linear(enc, p("actor/w1"), p("actor/b1")));
  h = relu(linear(h, p("actor/w2"), p("actor/b2")));
  Var out = linear(h, p("actor/w3"), p("actor/b3"));  // [B,2]
  Var mean = slice_cols(out, 0, 1);
  Var raw_std = slice_cols(out, 1, 1);

  // log_std squashed into [log_std_min, log_std_max].
  const double lo = cfg_.log_std_min, hi = cfg_.log_std_max;
  Var log_std = add_scalar(scale(tanh_op(raw_std), 0.5 * (hi - lo)),
                           0.5 * (hi + lo));
  Var std = exp_op(log_std);

  Var eps_c(eps, false);
  Var u = add(mean, mul(std, eps_c));
  Var squashed = tanh_op(u);
  Var action = add_scalar(scale(squashed, cfg_.v_half()), cfg_.v_mid());

  // log pi(a) = N(u; mean, std) - log|da/du|
  //           = -eps^2/2 - log_std - log(2*pi)/2
  //             - log(v_half) - 2*(ln2 - u - softplus(-2u)).
  Var eps_sq = square(eps_c);
  Var logp = scale(eps_sq, -0.5);
  logp = sub(logp, log_std);
  logp = add_scalar(logp, -0.5 * kLog2Pi - std::log(cfg_.v_half()) - 2.0 * kLn2);
  Var jac = add(scale(u, -2.0), scale(softplus(scale(u, -2.0)), -2.0));
  logp = sub(logp, jac);

  ActorSample s;
  s.action = action;
  s.log_prob = logp;
  s.mean_action = Tensor(mean.value().shape());
  for (int64_t i = 0; i < s.mean_action.numel(); ++i)
    s.mean_action[i] = cfg_.v_mid() + cfg_.v_half() * std::tanh(mean.value()[i]);
  return s;
}

Var PolicyNet::critic(int which, const Var& enc, const Var& action, bool target) {
  const std::string prefix =
      (target ? "target/critic" : "critic") + std::to_string(which);
  Var x = concat_cols(enc, action);
  Var h = relu(linear(x, p(prefix + "/w1"), p(prefix + "/b1")));
  h = relu(linear(h, p(prefix + "/w2"), p(prefix + "/b2")));
  return linear(h, p(prefix + "/w3"), p(prefix + "/b3"));
}

double PolicyNet::act(const std::vector<double>& slices_flat,
                      const std::vector<double>& scalars, Rng* rng) {
  NoGradGuard ng;
  const int K = cfg_.k_slices, S = cfg_.slice_size;
  if (static_cast<int64_t>(slices_flat.size()) != int64_t(K) * S * S)
    throw ShapeMismatch("act: slice size mismatch");
  Tensor sl({1, K, S, S}, slices_flat);
  Tensor sc({1, cfg_.scalar_dim},
            std::vector<double>(scalars.begin(), scalars.end()));
  Var enc = encode(sl, sc);
  Tensor eps({1, 1}, {rng ? rng->normal() : 0.0});
  ActorSample s = actor_sample(enc, eps);
  return rng ? s.action.value()[0] : s.mean_action[0];
}

void PolicyNet::freeze_encoder() {
  frozen_ = true;
  for (auto& par : params_)
    if (par.encoder) par.var.set_requires_grad(false);
}

void PolicyNet::copy_targets_from_online() {
  for (auto& tp : target_params_) {
    const Param* src = find(tp.name.substr(std::string("target/").size()));
    tp.var.mutable_value() = src->var.value();
  }
}

void PolicyNet::polyak_update(double tau) {
  for (auto& tp : target_params_) {
    const Param* src = find(tp.name.substr(std::string("target/").size()));
    Tensor& dst = tp.var.mutable_value();
    const Tensor& online = src->var.value();
    for (int64_t i = 0; i < dst.numel(); ++i)
      dst[i] = tau * online[i] + (1.0 - tau) * dst[i];
  }
}

void save_tensor_map(std::ostream& os, const std::string& meta_json,
                     const std::map<std::string, Tensor>& tensors) {
  write_pod(os, kMagic);
  write_pod(os, kVersion);
  write_string(os, meta_json);
  write_pod<uint64_t>(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    write_string(os, name);
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_pod<int32_t>(os, t.dim(i));
    write_bytes(os, t.data(), sizeof(double) * t.numel());
  }
  if (!os) throw IoError("tensor map write failed");
}

void save_tensor_map(const std::string& path, const std::string& meta_json,
                     const std::map<std::string, Tensor>& tensors) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  save_tensor_map(f, meta_json, tensors);
}

std::map<std::string, Tensor> load_tensor_map(std::istream& is,
                                              std::string* meta_json) {
  if (read_pod<uint32_t>(is) != kMagic) throw CorruptFile("bad magic");
  const auto version = read_pod<uint32_t>(is);
  if (version != kVersion)
    throw VersionMismatch("checkpoint version " + std::to_string(version) +
                          ", expected " + std::to_string(kVersion));
  const std::string meta = read_string(is);
  if (meta_json) *meta_json = meta;
  const auto count = read_pod<uint64_t>(is);
  std::map<std::string, Tensor> out;
  for (uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(is);
    const auto nd = read_pod<uint32_t>(is);
    std::vector<int> shape(nd);
    for (auto& d : shape) d = read_pod<int32_t>(is);
    Tensor t(shape);
    read_bytes(is, t.data(), sizeof(double) * t.numel());
    out.emplace(name, std::move(t));
  }
  return out;
}

std::map<std::string, Tensor> load_tensor_map(const std::string& path,
                                              std::string* meta_json) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  return load_tensor_map(f, meta_json);
}

void PolicyNet::save(const std::string& path,
                     const std::string& extra_meta_json) const {
  nlohmann::json meta{{"kind", "policy"},
                      {"k_slices", cfg_.k_slices},
                      {"slice_size", cfg_.slice_size},
                      {"scalar_dim", cfg_.scalar_dim},
                      {"v_min", cfg_.v_min},
                      {"v_max", cfg_.v_max},
                      {"log_std_min", cfg_.log_std_min},
                      {"log_std_max", cfg_.log_std_max},
                      {"init_seed", cfg_.init_seed},
                      {"frozen", frozen_},
                      {"extra", nlohmann::json::parse(extra_meta_json)}};
  std::map<std::string, Tensor> m;
  for (const auto& par : params_) m.emplace(par.name, par.var.value());
  for (const auto& par : target_params_) m.emplace(par.name, par.var.value());
  save_tensor_map(path, meta.dump(), m);
}

PolicyNet PolicyNet::load(const std::string& path, std::string* meta_out) {
  std::string meta_str;
  auto m = load_tensor_map(path, &meta_str);
  auto meta = nlohmann::json::parse(meta_str);
  if (meta.value("kind", "") != "policy")
    throw CorruptFile("not a policy checkpoint: " + path);
  PolicyConfig cfg;
  cfg.k_slices = meta.at("k_slices");
  cfg.slice_size = meta.at("slice_size");
  cfg.scalar_dim = meta.at("scalar_dim");
  cfg.v_min = meta.at("v_min");
  cfg.v_max = meta.at("v_max");
  cfg.log_std_min = meta.at("log_std_min");
  cfg.log_std_max = meta.at("log_std_max");
  cfg.init_seed = meta.at("init_seed");
  PolicyNet net(cfg);
  for (auto& par : net.params_) {
    auto it = m.find(par.name);
    if (it == m.end()) throw CorruptFile("missing parameter: " + par.name);
    if (!it->second.same_shape(par.var.value()))
      throw CorruptFile("parameter shape mismatch: " + par.name);
    par.var.mutable_value() = it->second;
  }
  for (auto& par : net.target_params_) {
    auto it = m.find(par.name);
    if (it == m.end()) throw CorruptFile("missing parameter: " + par.name);
    par.var.mutable_value() = it->second;
  }
  if (meta.value("frozen", false)) net.freeze_encoder();
  if (meta_out) *meta_out = meta_str;
  return net;
}

}  // namespace afc::nn
