// Reverse-mode autodiff over Tensor values. Graphs are built per forward
// pass; backward() topologically sorts by creation id and accumulates into
// leaf gradients. A NoGrad guard builds value-only passes (no graph).
#pragma once

#include <functional>
#include <memory>

#include "afc/nn/tensor.hpp"

namespace afc::nn {

struct Node {
  Tensor value;
  Tensor grad;  // same shape as value once touched
  bool requires_grad = false;
  int64_t id = 0;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // pushes grad into parents

  void ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor(value.shape());
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return n_ != nullptr; }
  const Tensor& value() const { return n_->value; }
  Tensor& mutable_value() { return n_->value; }
  const Tensor& grad() const { return n_->grad; }
  bool requires_grad() const { return n_ && n_->requires_grad; }
  void set_requires_grad(bool rg) { n_->requires_grad = rg; }
  void zero_grad() {
    if (n_) n_->grad = Tensor();
  }
  std::shared_ptr<Node> node() const { return n_; }

  // Leaf copy of the current value, cut off from the graph.
  Var detach() const { return Var(n_->value, false); }

 private:
  friend Var make_op(Tensor value, std::vector<Var> parents,
                     std::function<void(Node&)> backward_fn);
  std::shared_ptr<Node> n_;
};

// RAII guard: ops created inside build no graph (constant results).
struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
};
bool grad_enabled();

// Runs backward from a scalar loss; accumulates into leaf grads.
void backward(const Var& loss);

// ---- ops ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);           // elementwise
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var exp_op(const Var& a);
Var tanh_op(const Var& a);
Var softplus(const Var& a);                    // log(1 + e^x), stable
Var relu(const Var& a);
Var min_elem(const Var& a, const Var& b);      // subgradient to the smaller
Var matmul(const Var& a, const Var& b);        // [m,k] x [k,n]
Var linear(const Var& x, const Var& w, const Var& b);   // x[B,I] w[I,O] b[1,O]
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var flatten2(const Var& x);                    // [B,...] -> [B, rest]
Var concat_cols(const Var& a, const Var& b);   // [B,m] + [B,n] -> [B,m+n]
Var slice_cols(const Var& x, int begin, int count);
Var mean_all(const Var& x);                    // -> [1]
Var sum_all(const Var& x);                     // -> [1]

// Expected output spatial size of conv2d.
int conv_out_size(int in, int kernel, int stride, int pad);

}  // namespace afc::nn
