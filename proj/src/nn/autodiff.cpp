#include "afc/nn/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace afc::nn {

namespace {

std::atomic<int64_t> g_next_id{1};
thread_local int g_no_grad_depth = 0;

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

CMapRM as_mat(const Tensor& t, int rows, int cols) {
  return CMapRM(t.data(), rows, cols);
}
MapRM as_mat(Tensor& t, int rows, int cols) { return MapRM(t.data(), rows, cols); }

void check_same(const Var& a, const Var& b, const char* op) {
  if (!a.value().same_shape(b.value()))
    throw ShapeMismatch(std::string(op) + ": shape mismatch " +
                        a.value().shape_str() + " vs " + b.value().shape_str());
}

void accumulate(const std::shared_ptr<Node>& p, const Tensor& g) {
  if (!p->requires_grad) return;
  p->ensure_grad();
  double* dst = p->grad.data();
  const double* src = g.data();
  const int64_t n = g.numel();
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Var::Var(Tensor value, bool requires_grad) {
  n_ = std::make_shared<Node>();
  n_->value = std::move(value);
  n_->requires_grad = requires_grad && grad_enabled();
  n_->id = g_next_id.fetch_add(1);
}

Var make_op(Tensor value, std::vector<Var> parents,
            std::function<void(Node&)> backward_fn) {
  Var out(std::move(value), false);
  if (!grad_enabled()) return out;
  bool any = false;
  for (const auto& p : parents) any = any || p.requires_grad();
  if (!any) return out;
  out.n_->requires_grad = true;
  out.n_->parents.reserve(parents.size());
  for (auto& p : parents) out.n_->parents.push_back(p.node());
  out.n_->backward_fn = std::move(backward_fn);
  return out;
}

void backward(const Var& loss) {
  if (loss.value().numel() != 1)
    throw ShapeMismatch("backward: loss must be scalar");
  if (!loss.requires_grad()) return;

  // Topological order by DFS; creation ids are acyclic by construction.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{loss.node().get()};
  while (!stack.empty()) {
    Node* n = stack.back();
    if (seen.count(n)) {
      stack.pop_back();
      continue;
    }
    bool ready = true;
    for (auto& p : n->parents)
      if (p->requires_grad && !seen.count(p.get())) {
        stack.push_back(p.get());
        ready = false;
      }
    if (ready) {
      seen.insert(n);
      order.push_back(n);
      stack.pop_back();
    }
  }
  std::sort(order.begin(), order.end(),
            [](const Node* a, const Node* b) { return a->id > b->id; });

  Node* root = loss.node().get();
  root->ensure_grad();
  root->grad[0] = 1.0;
  for (Node* n : order)
    if (n->backward_fn && n->grad.numel() == n->value.numel()) n->backward_fn(*n);
}

// ---- elementwise ----

Var add(const Var& a, const Var& b) {
  check_same(a, b, "add");
  Tensor v(a.value().shape());
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] + b.value()[i];
  return make_op(std::move(v), {a, b}, [](Node& n) {
    accumulate(n.parents[0], n.grad);
    accumulate(n.parents[1], n.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  check_same(a, b, "sub");
  Tensor v(a.value().shape());
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] - b.value()[i];
  return make_op(std::move(v), {a, b}, [](Node& n) {
    accumulate(n.parents[0], n.grad);
    if (n.parents[1]->requires_grad) {
      Tensor g(n.grad.shape());
      for (int64_t i = 0; i < g.numel(); ++i) g[i] = -n.grad[i];
      accumulate(n.parents[1], g);
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same(a, b, "mul");
  Tensor v(a.value().shape());
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(v), {a, b}, [](Node& n) {
    if (n.parents[0]->requires_grad) {
      Tensor g(n.grad.shape());
      for (int64_t i = 0; i < g.numel(); ++i)
        g[i] = n.grad[i] * n.parents[1]->value[i];
      accumulate(n.parents[0], g);
    }
    if (n.parents[1]->requires_grad) {
      Tensor g(n.grad.shape());
      for (int64_t i = 0; i < g.numel(); ++i)
        g[i] = n.grad[i] * n.parents[0]->value[i];
      accumulate(n.parents[1], g);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor v(a.value().shape());
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] * s;
  return make_op(std::move(v), {a}, [s](Node& n) {
    Tensor g(n.grad.shape());
    for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * s;
    accumulate(n.parents[0], g);
  });
}

Var add_scalar(const Var& a, double s) {
  Tensor v(a.value().shape());
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] + s;
  return make_op(std::move(v), {a},
                 [](Node& n) { accumulate(n.parents[0], n.grad); });
}

Var square(const Var& a) {
  Tensor v(a.value().shape());
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = a.value()[i] * a.value()[i];
  return make_op(std::move(v), {a}, [](Node& n) {
    Tensor g(n.grad.shape());
    for (int64_t i = 0; i < g.numel(); ++i)
      g[i] = 2.0 * n.grad[i] * n.parents[0]->value[i];
    accumulate(n.parents[0], g);
  });
}

Var exp_op(const Var& a) {
  Tensor v(a.value().shape());
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = std::exp(a.value()[i]);
  return make_op(std::move(v), {a}, [](Node& n) {
    Tensor g(n.grad.shape());
    for (int64_t i = 0; i < g.numel(); ++i) g[i] = n.grad[i] * n.value[i];
    accumulate(n.parents[0], g);
  });
}

Var tanh_op(const Var& a) {
  Tensor v(a.value().shape());
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = std::tanh(a.value()[i]);
  return make_op(std::move(v), {a}, [](Node& n) {
    Tensor g(n.grad.shape());
    for (int64_t i = 0; i < g.numel(); ++i)
      g[i] = n.grad[i] * (1.0 - n.value[i] * n.value[i]);
    accumulate(n.parents[0], g);
  });
}

Var softplus(const Var& a) {
  Tensor v(a.value().shape());
  for (int64_t i = 0; i < v.numel(); ++i) {
    const double x = a.value()[i];
    v[i] = x > 30.0 ? x : std::log1p(std::exp(std::min(x, 30.0)));
  }
  return make_op(std::move(v), {a}, [](Node& n) {
    Tensor g(n.grad.shape());
    for (int64_t i = 0; i < g.numel(); ++i) {
      const double x = n.parents[0]->value[i];
      g[i] = n.grad[i] / (1.0 + std::exp(-x));
    }
    accumulate(n.parents[0], g);
  });
}

Var relu(const Var& a) {
  Tensor v(a.value().shape());
  for (int64_t i = 0; i < v.numel(); ++i) v[i] = std::max(a.value()[i], 0.0);
  return make_op(std::move(v), {a}, [](Node& n) {
    Tensor g(n.grad.shape());
    for (int64_t i = 0; i < g.numel(); ++i)
      g[i] = n.parents[0]->value[i] > 0.0 ? n.grad[i] : 0.0;
    accumulate(n.parents[0], g);
  });
}

Var min_elem(const Var& a, const Var& b) {
  check_same(a, b, "min_elem");
  Tensor v(a.value().shape());
  for (int64_t i = 0; i < v.numel(); ++i)
    v[i] = std::min(a.value()[i], b.value()[i]);
  return make_op(std::move(v), {a, b}, [](Node& n) {
    const Tensor& av = n.parents[0]->value;
    const Tensor& bv = n.parents[1]->value;
    if (n.parents[0]->requires_grad) {
      Tensor g(n.grad.shape());
      for (int64_t i = 0; i < g.numel(); ++i)
        g[i] = av[i] <= bv[i] ? n.grad[i] : 0.0;
      accumulate(n.parents[0], g);
    }
    if (n.parents[1]->requires_grad) {
      Tensor g(n.grad.shape());
      for (int64_t i = 0; i < g.numel(); ++i)
        g[i] = av[i] <= bv[i] ? 0.0 : n.grad[i];
      accumulate(n.parents[1], g);
    }
  });
}

// ---- linear algebra ----

Var matmul(const Var& a, const Var& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0))
    throw ShapeMismatch("matmul: incompatible " + av.shape_str() + " x " +
                        bv.shape_str());
  const int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor v({m, n});
  as_mat(v, m, n).noalias() = as_mat(av, m, k) * as_mat(bv, k, n);
  return make_op(std::move(v), {a, b}, [m, k, n](Node& nd) {
    CMapRM gy(nd.grad.data(), m, n);
    if (nd.parents[0]->requires_grad) {
      Tensor g({m, k});
      as_mat(g, m, k).noalias() =
          gy * as_mat(nd.parents[1]->value, k, n).transpose();
      accumulate(nd.parents[0], g);
    }
    if (nd.parents[1]->requires_grad) {
      Tensor g({k, n});
      as_mat(g, k, n).noalias() =
          as_mat(nd.parents[0]->value, m, k).transpose() * gy;
      accumulate(nd.parents[1], g);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  if (xv.ndim() != 2 || wv.ndim() != 2 || xv.dim(1) != wv.dim(0) ||
      bv.numel() != wv.dim(1))
    throw ShapeMismatch("linear: incompatible shapes");
  const int B = xv.dim(0), I = xv.dim(1), O = wv.dim(1);
  Tensor v({B, O});
  as_mat(v, B, O).noalias() = as_mat(xv, B, I) * as_mat(wv, I, O);
  {
    double* vp = v.data();
    const double* bp = bv.data();
    for (int r = 0; r < B; ++r)
      for (int c = 0; c < O; ++c) vp[static_cast<int64_t>(r) * O + c] += bp[c];
  }
  return make_op(std::move(v), {x, w, b}, [B, I, O](Node& nd) {
    CMapRM gy(nd.grad.data(), B, O);
    if (nd.parents[0]->requires_grad) {
      Tensor g({B, I});
      as_mat(g, B, I).noalias() =
          gy * as_mat(nd.parents[1]->value, I, O).transpose();
      accumulate(nd.parents[0], g);
    }
    if (nd.parents[1]->requires_grad) {
      Tensor g({I, O});
      as_mat(g, I, O).noalias() =
          as_mat(nd.parents[0]->value, B, I).transpose() * gy;
      accumulate(nd.parents[1], g);
    }
    if (nd.parents[2]->requires_grad) {
      Tensor g(nd.parents[2]->value.shape());
      for (int r = 0; r < B; ++r)
        for (int c = 0; c < O; ++c) g[c] += gy(r, c);
      accumulate(nd.parents[2], g);
    }
  });
}

int conv_out_size(int in, int kernel, int stride, int pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

namespace {

// im2col: [C*kh*kw, Ho*Wo] per sample, written into a column block.
void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride,
            int pad, int Ho, int Wo, double* col /* rows x (Ho*Wo) */) {
  const int rows = C * kh * kw;
  for (int r = 0; r < rows; ++r) {
    const int c = r / (kh * kw);
    const int ky = (r / kw) % kh;
    const int kx = r % kw;
    double* out_row = col + static_cast<int64_t>(r) * Ho * Wo;
    for (int oy = 0; oy < Ho; ++oy) {
      const int iy = oy * stride + ky - pad;
      for (int ox = 0; ox < Wo; ++ox) {
        const int ix = ox * stride + kx - pad;
        out_row[oy * Wo + ox] =
            (iy >= 0 && iy < H && ix >= 0 && ix < W)
                ? x[(static_cast<int64_t>(c) * H + iy) * W + ix]
                : 0.0;
      }
    }
  }
}

void col2im_accum(const double* col, int C, int H, int W, int kh, int kw,
                  int stride, int pad, int Ho, int Wo, double* gx) {
  const int rows = C * kh * kw;
  for (int r = 0; r < rows; ++r) {
    const int c = r / (kh * kw);
    const int ky = (r / kw) % kh;
    const int kx = r % kw;
    const double* in_row = col + static_cast<int64_t>(r) * Ho * Wo;
    for (int oy = 0; oy < Ho; ++oy) {
      const int iy = oy * stride + ky - pad;
      if (iy < 0 || iy >= H) continue;
      for (int ox = 0; ox < Wo; ++ox) {
        const int ix = ox * stride + kx - pad;
        if (ix < 0 || ix >= W) continue;
        gx[(static_cast<int64_t>(c) * H + iy) * W + ix] += in_row[oy * Wo + ox];
      }
    }
  }
}

}  // namespace

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
  const auto& xv = x.value();
  const auto& wv = w.value();
  if (xv.ndim() != 4 || wv.ndim() != 4 || xv.dim(1) != wv.dim(1))
    throw ShapeMismatch("conv2d: bad shapes " + xv.shape_str() + " " +
                        wv.shape_str());
  const int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  const int O = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  const int Ho = conv_out_size(H, kh, stride, pad);
  const int Wo = conv_out_size(W, kw, stride, pad);
  if (Ho <= 0 || Wo <= 0) throw ShapeMismatch("conv2d: empty output");
  if (b.value().numel() != O) throw ShapeMismatch("conv2d: bias size");

  const int rows = C * kh * kw;
  const int cols = Ho * Wo;
  Tensor v({B, O, Ho, Wo});

  // Weight matrix view [O, rows] (w is [O, C, kh, kw], contiguous).
  CMapRM wm(wv.data(), O, rows);
  std::vector<double> col(static_cast<size_t>(rows) * cols);
  for (int s = 0; s < B; ++s) {
    im2col(xv.data() + static_cast<int64_t>(s) * C * H * W, C, H, W, kh, kw,
           stride, pad, Ho, Wo, col.data());
    MapRM out(v.data() + static_cast<int64_t>(s) * O * cols, O, cols);
    out.noalias() = wm * CMapRM(col.data(), rows, cols);
    const double* bp = b.value().data();
    for (int o = 0; o < O; ++o)
      for (int i = 0; i < cols; ++i) out(o, i) += bp[o];
  }

  const auto bw = [B, C, H, W, O, kh, kw, stride, pad, Ho, Wo, rows,
                   cols](Node& nd) {
    std::vector<double> col(static_cast<size_t>(rows) * cols);
    const Tensor& xval = nd.parents[0]->value;
    const Tensor& wval = nd.parents[1]->value;
    Tensor gw({O, C, kh, kw});
    Tensor gx(xval.shape());
    Tensor gb({O});
    const bool need_x = nd.parents[0]->requires_grad;
    const bool need_w = nd.parents[1]->requires_grad;
    const bool need_b = nd.parents[2]->requires_grad;
    MapRM gwm(gw.data(), O, rows);
    CMapRM wm(wval.data(), O, rows);
    std::vector<double> gcol(static_cast<size_t>(rows) * cols);
    for (int s = 0; s < B; ++s) {
      CMapRM gy(nd.grad.data() + static_cast<int64_t>(s) * O * cols, O, cols);
      if (need_w || need_x)
        im2col(xval.data() + static_cast<int64_t>(s) * C * H * W, C, H, W, kh,
               kw, stride, pad, Ho, Wo, col.data());
      if (need_w) gwm.noalias() += gy * CMapRM(col.data(), rows, cols).transpose();
      if (need_b)
        for (int o = 0; o < O; ++o) gb[o] += gy.row(o).sum();
      if (need_x) {
        MapRM gc(gcol.data(), rows, cols);
        gc.noalias() = wm.transpose() * gy;
        col2im_accum(gcol.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                     gx.data() + static_cast<int64_t>(s) * C * H * W);
      }
    }
    if (need_x) accumulate(nd.parents[0], gx);
    if (need_w) accumulate(nd.parents[1], gw);
    if (need_b) accumulate(nd.parents[2], gb);
  };
  return make_op(std::move(v), {x, w, b}, bw);
}

Var flatten2(const Var& x) {
  const auto& xv = x.value();
  const int B = xv.dim(0);
  const int rest = static_cast<int>(xv.numel() / B);
  Tensor v({B, rest});
  std::copy(xv.data(), xv.data() + xv.numel(), v.data());
  return make_op(std::move(v), {x}, [](Node& n) {
    Tensor g(n.parents[0]->value.shape());
    std::copy(n.grad.data(), n.grad.data() + n.grad.numel(), g.data());
    accumulate(n.parents[0], g);
  });
}

Var concat_cols(const Var& a, const Var& b) {
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(0) != bv.dim(0))
    throw ShapeMismatch("concat_cols: incompatible shapes");
  const int B = av.dim(0), m = av.dim(1), n = bv.dim(1);
  Tensor v({B, m + n});
  for (int r = 0; r < B; ++r) {
    std::copy(av.data() + static_cast<int64_t>(r) * m,
              av.data() + static_cast<int64_t>(r + 1) * m,
              v.data() + static_cast<int64_t>(r) * (m + n));
    std::copy(bv.data() + static_cast<int64_t>(r) * n,
              bv.data() + static_cast<int64_t>(r + 1) * n,
              v.data() + static_cast<int64_t>(r) * (m + n) + m);
  }
  return make_op(std::move(v), {a, b}, [B, m, n](Node& nd) {
    if (nd.parents[0]->requires_grad) {
      Tensor g({B, m});
      for (int r = 0; r < B; ++r)
        std::copy(nd.grad.data() + static_cast<int64_t>(r) * (m + n),
                  nd.grad.data() + static_cast<int64_t>(r) * (m + n) + m,
                  g.data() + static_cast<int64_t>(r) * m);
      accumulate(nd.parents[0], g);
    }
    if (nd.parents[1]->requires_grad) {
      Tensor g({B, n});
      for (int r = 0; r < B; ++r)
        std::copy(nd.grad.data() + static_cast<int64_t>(r) * (m + n) + m,
                  nd.grad.data() + static_cast<int64_t>(r + 1) * (m + n),
                  g.data() + static_cast<int64_t>(r) * n);
      accumulate(nd.parents[1], g);
    }
  });
}

Var slice_cols(const Var& x, int begin, int count) {
  const auto& xv = x.value();
  if (xv.ndim() != 2 || begin < 0 || begin + count > xv.dim(1))
    throw ShapeMismatch("slice_cols: out of range");
  const int B = xv.dim(0), N = xv.dim(1);
  Tensor v({B, count});
  for (int r = 0; r < B; ++r)
    std::copy(xv.data() + static_cast<int64_t>(r) * N + begin,
              xv.data() + static_cast<int64_t>(r) * N + begin + count,
              v.data() + static_cast<int64_t>(r) * count);
  return make_op(std::move(v), {x}, [B, N, begin, count](Node& nd) {
    Tensor g({B, N});
    for (int r = 0; r < B; ++r)
      for (int c = 0; c < count; ++c)
        g[static_cast<int64_t>(r) * N + begin + c] =
            nd.grad[static_cast<int64_t>(r) * count + c];
    accumulate(nd.parents[0], g);
  });
}

Var mean_all(const Var& x) {
  const int64_t n = x.value().numel();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += x.value()[i];
  Tensor v({1}, {s / n});
  return make_op(std::move(v), {x}, [n](Node& nd) {
    Tensor g(nd.parents[0]->value.shape());
    const double gs = nd.grad[0] / n;
    for (int64_t i = 0; i < n; ++i) g[i] = gs;
    accumulate(nd.parents[0], g);
  });
}

Var sum_all(const Var& x) {
  const int64_t n = x.value().numel();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += x.value()[i];
  Tensor v({1}, {s});
  return make_op(std::move(v), {x}, [n](Node& nd) {
    Tensor g(nd.parents[0]->value.shape());
    for (int64_t i = 0; i < n; ++i) g[i] = nd.grad[0];
    accumulate(nd.parents[0], g);
  });
}

}  // namespace afc::nn
