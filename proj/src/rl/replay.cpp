#include "afc/rl/replay.hpp"

#include <istream>
#include <ostream>

#include "afc/io.hpp"

namespace afc::rl {

SumTree::SumTree(size_t capacity) : cap_(capacity) {
  base_ = 1;
  while (base_ < cap_) base_ <<= 1;
  tree_.assign(2 * base_, 0.0);
}

void SumTree::set(size_t idx, double value) {
  size_t i = base_ + idx;
  tree_[i] = value;
  for (i >>= 1; i >= 1; i >>= 1) {
    tree_[i] = tree_[2 * i] + tree_[2 * i + 1];
    if (i == 1) break;
  }
}

size_t SumTree::find(double mass) const {
  size_t i = 1;
  while (i < base_) {
    const double left = tree_[2 * i];
    if (mass < left) {
      i = 2 * i;
    } else {
      mass -= left;
      i = 2 * i + 1;
    }
  }
  return i - base_;
}

ReplayBuffer::ReplayBuffer(size_t capacity, const ObservationConfig& obs_cfg,
                           double alpha_per, double eps_per)
    : capacity_(capacity),
      obs_cfg_(obs_cfg),
      alpha_(alpha_per),
      eps_(eps_per),
      tree_(capacity) {
  data_.resize(capacity);
}

PackedObs ReplayBuffer::pack(const Observation& obs) const {
  PackedObs p;
  const auto& enc = obs_cfg_.cell_encoding;
  const size_t cells = static_cast<size_t>(obs_cfg_.slice_count) *
                       obs_cfg_.slice_size * obs_cfg_.slice_size;
  p.slices.assign((cells + 3) / 4, 0);
  size_t cell = 0;
  for (const auto& slice : obs.slices) {
    for (double v : slice) {
      uint8_t code = 0;
      for (uint8_t k = 0; k < 4; ++k)
        if (v == enc[k]) {
          code = k;
          break;
        }
      p.slices[cell >> 2] |= static_cast<uint8_t>(code << ((cell & 3) * 2));
      ++cell;
    }
  }
  const auto sc = obs.scalars();
  for (size_t i = 0; i < p.scalars.size(); ++i) p.scalars[i] = sc[i];
  return p;
}

void ReplayBuffer::unpack_into(const PackedObs& packed, double* slices_out,
                               double* scalars_out) const {
  const auto& enc = obs_cfg_.cell_encoding;
  const size_t cells = static_cast<size_t>(obs_cfg_.slice_count) *
                       obs_cfg_.slice_size * obs_cfg_.slice_size;
  for (size_t i = 0; i < cells; ++i) {
    const uint8_t code = (packed.slices[i >> 2] >> ((i & 3) * 2)) & 3u;
    slices_out[i] = enc[code];
  }
  for (size_t i = 0; i < packed.scalars.size(); ++i)
    scalars_out[i] = packed.scalars[i];
}

void ReplayBuffer::push(const Observation& obs, double action, double reward,
                        const Observation& next_obs, bool done) {
  Transition& t = data_[head_];
  t.obs = pack(obs);
  t.next_obs = pack(next_obs);
  t.action = action;
  t.reward = reward;
  t.done = done;
  tree_.set(head_, std::pow(max_priority_, alpha_));
  head_ = (head_ + 1) % capacity_;
  size_ = std::min(size_ + 1, capacity_);
}

Batch ReplayBuffer::sample(int batch_size, double beta, Rng& rng) const {
  if (size_ == 0) throw BufferUnderflow("sample from empty replay buffer");
  Batch b;
  const int K = obs_cfg_.slice_count, S = obs_cfg_.slice_size;
  b.slices = nn::Tensor({batch_size, K, S, S});
  b.next_slices = nn::Tensor({batch_size, K, S, S});
  b.scalars = nn::Tensor({batch_size, 7});
  b.next_scalars = nn::Tensor({batch_size, 7});
  b.actions = nn::Tensor({batch_size, 1});
  b.rewards.resize(batch_size);
  b.dones.resize(batch_size);
  b.indices.resize(batch_size);
  b.weights.resize(batch_size);

  const double total = tree_.total();
  const int64_t cells = int64_t(K) * S * S;
  for (int i = 0; i < batch_size; ++i) {
    // Stratified sampling over the priority mass.
    const double lo = total * i / batch_size;
    const double hi = total * (i + 1) / batch_size;
    size_t idx = tree_.find(rng.uniform(lo, hi));
    if (idx >= size_) idx = size_ - 1;  // guard the padded tail
    b.indices[i] = idx;
    const double p = tree_.get(idx) / total;
    b.weights[i] = std::pow(static_cast<double>(size_) * std::max(p, 1e-12),
                            -beta);
    const Transition& t = data_[idx];
    unpack_into(t.obs, b.slices.data() + i * cells, b.scalars.data() + i * 7);
    unpack_into(t.next_obs, b.next_slices.data() + i * cells,
                b.next_scalars.data() + i * 7);
    b.actions[i] = t.action;
    b.rewards[static_cast<size_t>(i)] = t.reward;
    b.dones[static_cast<size_t>(i)] = t.done ? 1 : 0;
  }
  double wmax = 0.0;
  for (double w : b.weights) wmax = std::max(wmax, w);
  if (wmax > 0)
    for (double& w : b.weights) w /= wmax;
  return b;
}

void ReplayBuffer::update_priorities(const std::vector<size_t>& indices,
                                     const std::vector<double>& td_errors) {
  for (size_t i = 0; i < indices.size(); ++i) {
    const double p = std::abs(td_errors[i]) + eps_;
    max_priority_ = std::max(max_priority_, p);
    tree_.set(indices[i], std::pow(p, alpha_));
  }
}

void ReplayBuffer::serialize(std::ostream& os) const {
  write_pod<uint64_t>(os, capacity_);
  write_pod<uint64_t>(os, head_);
  write_pod<uint64_t>(os, size_);
  write_pod<double>(os, max_priority_);
  for (size_t i = 0; i < size_; ++i) {
    const Transition& t = data_[i];
    write_pod<uint32_t>(os, static_cast<uint32_t>(t.obs.slices.size()));
    write_bytes(os, t.obs.slices.data(), t.obs.slices.size());
    write_bytes(os, t.obs.scalars.data(), sizeof(t.obs.scalars));
    write_bytes(os, t.next_obs.slices.data(), t.next_obs.slices.size());
    write_bytes(os, t.next_obs.scalars.data(), sizeof(t.next_obs.scalars));
    write_pod(os, t.action);
    write_pod(os, t.reward);
    write_pod<uint8_t>(os, t.done);
    write_pod<double>(os, tree_.get(i));
  }
}

void ReplayBuffer::deserialize(std::istream& is) {
  const auto cap = read_pod<uint64_t>(is);
  if (cap != capacity_) throw CorruptFile("replay capacity mismatch");
  head_ = read_pod<uint64_t>(is);
  size_ = read_pod<uint64_t>(is);
  max_priority_ = read_pod<double>(is);
  for (size_t i = 0; i < size_; ++i) {
    Transition& t = data_[i];
    const auto nbytes = read_pod<uint32_t>(is);
    t.obs.slices.resize(nbytes);
    read_bytes(is, t.obs.slices.data(), nbytes);
    read_bytes(is, t.obs.scalars.data(), sizeof(t.obs.scalars));
    t.next_obs.slices.resize(nbytes);
    read_bytes(is, t.next_obs.slices.data(), nbytes);
    read_bytes(is, t.next_obs.scalars.data(), sizeof(t.next_obs.scalars));
    t.action = read_pod<double>(is);
    t.reward = read_pod<double>(is);
    t.done = read_pod<uint8_t>(is) != 0;
    tree_.set(i, read_pod<double>(is));
  }
}

}  // namespace afc::rl
