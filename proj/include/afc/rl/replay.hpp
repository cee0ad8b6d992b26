// Prioritized experience replay: sum-tree sampling over p^alpha with
// importance weights, observations stored 2-bit packed (4 cell codes).
#pragma once

#include <array>
#include <iosfwd>

#include "afc/env.hpp"
#include "afc/nn/tensor.hpp"
#include "afc/rng.hpp"

namespace afc::rl {

struct BufferUnderflow : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class SumTree {
 public:
  explicit SumTree(size_t capacity);

  size_t capacity() const { return cap_; }
  double total() const { return tree_[1]; }
  void set(size_t idx, double value);
  double get(size_t idx) const { return tree_[base_ + idx]; }

  // Index whose prefix-sum interval contains mass in [0, total).
  size_t find(double mass) const;

  const std::vector<double>& raw() const { return tree_; }
  std::vector<double>& raw() { return tree_; }

 private:
  size_t cap_ = 0, base_ = 0;
  std::vector<double> tree_;
};

struct PackedObs {
  std::vector<uint8_t> slices;  // 2 bits per cell
  std::array<double, 7> scalars{};
};

struct Transition {
  PackedObs obs, next_obs;
  double action = 0.0;
  double reward = 0.0;
  bool done = false;  // true terminal (no bootstrap); time-limit cuts keep it false
};

struct Batch {
  std::vector<size_t> indices;
  std::vector<double> weights;     // importance weights, max-normalized
  nn::Tensor slices, scalars;      // [B,K,S,S], [B,7]
  nn::Tensor next_slices, next_scalars;
  nn::Tensor actions;              // [B,1]
  std::vector<double> rewards;
  std::vector<uint8_t> dones;
};

class ReplayBuffer {
 public:
  ReplayBuffer(size_t capacity, const ObservationConfig& obs_cfg,
               double alpha_per, double eps_per = 1e-3);

  size_t size() const { return size_; }
  size_t capacity() const { return capacity_; }
  double max_priority() const { return max_priority_; }

  // New transitions enter at the current max priority.
  void push(const Observation& obs, double action, double reward,
            const Observation& next_obs, bool done);

  Batch sample(int batch_size, double beta, Rng& rng) const;
  void update_priorities(const std::vector<size_t>& indices,
                         const std::vector<double>& td_errors);

  PackedObs pack(const Observation& obs) const;
  void unpack_into(const PackedObs& packed, double* slices_out,
                   double* scalars_out) const;

  void serialize(std::ostream& os) const;
  void deserialize(std::istream& is);

  const Transition& at(size_t i) const { return data_[i]; }

 private:
  size_t capacity_ = 0;
  ObservationConfig obs_cfg_;
  double alpha_ = 0.6;
  double eps_ = 1e-3;
  std::vector<Transition> data_;
  SumTree tree_;
  size_t head_ = 0, size_ = 0;
  double max_priority_ = 1.0;
};

}  // namespace afc::rl
