#include <doctest.h>

#include <functional>

#include "afc/nn/autodiff.hpp"
#include "afc/rng.hpp"

using namespace afc::nn;
using afc::Rng;

namespace {

// Central finite differences against the autodiff gradient of a scalar loss.
// rel tolerance 1e-4 at 64-bit per the gradient contract.
void check_grad(Var& param, const std::function<Var()>& loss_fn,
                double h = 1e-6, double tol = 1e-4) {
  Var loss = loss_fn();
  param.zero_grad();
  backward(loss);
  Tensor ad = param.grad();
  REQUIRE(ad.numel() == param.value().numel());
  Tensor& v = param.mutable_value();
  for (int64_t i = 0; i < v.numel(); ++i) {
    const double orig = v[i];
    v[i] = orig + h;
    const double up = loss_fn().value()[0];
    v[i] = orig - h;
    const double dn = loss_fn().value()[0];
    v[i] = orig;
    const double fd = (up - dn) / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(ad[i]), 1e-6});
    CHECK(std::abs(fd - ad[i]) / denom <= tol);
  }
}

Tensor random_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-scale, scale);
  return t;
}

}  // namespace

TEST_CASE("x^2 at x=3 has gradient 6") {
  Var x(Tensor::scalar(3.0), true);
  Var loss = square(x);
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(11);
  Var x(random_tensor({3, 4}, rng), true);
  Var y(random_tensor({3, 4}, rng), true);

  SUBCASE("add") { check_grad(x, [&] { return sum_all(add(x, y)); }); }
  SUBCASE("sub-right") { check_grad(y, [&] { return sum_all(sub(x, y)); }); }
  SUBCASE("mul") { check_grad(x, [&] { return sum_all(mul(x, y)); }); }
  SUBCASE("square") { check_grad(x, [&] { return sum_all(square(x)); }); }
  SUBCASE("exp") { check_grad(x, [&] { return sum_all(exp_op(x)); }); }
  SUBCASE("tanh") { check_grad(x, [&] { return sum_all(tanh_op(x)); }); }
  SUBCASE("softplus") { check_grad(x, [&] { return sum_all(softplus(x)); }); }
  SUBCASE("scale") { check_grad(x, [&] { return sum_all(scale(x, -2.5)); }); }
  SUBCASE("mean") { check_grad(x, [&] { return mean_all(mul(x, x)); }); }
  SUBCASE("min_elem") {
    check_grad(x, [&] { return sum_all(min_elem(x, y)); });
    check_grad(y, [&] { return sum_all(min_elem(x, y)); });
  }
}

TEST_CASE("relu gradient away from the kink") {
  Rng rng(12);
  Tensor t = random_tensor({4, 4}, rng);
  for (int64_t i = 0; i < t.numel(); ++i)
    if (std::abs(t[i]) < 0.05) t[i] = 0.1;  // keep clear of the kink
  Var x(t, true);
  check_grad(x, [&] { return sum_all(relu(x)); });
}

TEST_CASE("matmul / linear gradients") {
  Rng rng(13);
  Var a(random_tensor({3, 5}, rng), true);
  Var b(random_tensor({5, 2}, rng), true);
  Var bias(random_tensor({2}, rng), true);
  SUBCASE("matmul lhs") { check_grad(a, [&] { return sum_all(matmul(a, b)); }); }
  SUBCASE("matmul rhs") { check_grad(b, [&] { return sum_all(matmul(a, b)); }); }
  SUBCASE("linear weight") {
    check_grad(b, [&] { return sum_all(square(linear(a, b, bias))); });
  }
  SUBCASE("linear bias") {
    check_grad(bias, [&] { return sum_all(square(linear(a, b, bias))); });
  }
  SUBCASE("linear input") {
    check_grad(a, [&] { return sum_all(square(linear(a, b, bias))); });
  }
}

TEST_CASE("conv2d gradients match finite differences on random shapes") {
  Rng rng(14);
  for (int c = 0; c < 4; ++c) {
    const int C = rng.uniform_int(1, 3);
    const int O = rng.uniform_int(1, 3);
    const int H = rng.uniform_int(5, 8);
    const int k = rng.uniform_int(2, 3);
    const int stride = rng.uniform_int(1, 2);
    const int pad = rng.uniform_int(0, 1);
    if (conv_out_size(H, k, stride, pad) <= 0) continue;
    Var x(random_tensor({2, C, H, H}, rng), true);
    Var w(random_tensor({O, C, k, k}, rng), true);
    Var b(random_tensor({O}, rng), true);
    auto loss = [&] { return sum_all(square(conv2d(x, w, b, stride, pad))); };
    check_grad(w, loss);
    check_grad(b, loss);
    check_grad(x, loss);
  }
}

TEST_CASE("structural op gradients") {
  Rng rng(15);
  Var x(random_tensor({3, 4}, rng), true);
  Var y(random_tensor({3, 2}, rng), true);
  SUBCASE("concat") {
    check_grad(x, [&] { return sum_all(square(concat_cols(x, y))); });
    check_grad(y, [&] { return sum_all(square(concat_cols(x, y))); });
  }
  SUBCASE("slice") {
    check_grad(x, [&] { return sum_all(square(slice_cols(x, 1, 2))); });
  }
  SUBCASE("flatten") {
    Var z(random_tensor({2, 3, 2, 2}, rng), true);
    check_grad(z, [&] { return sum_all(square(flatten2(z))); });
  }
}

TEST_CASE("chained graph with shared subexpression accumulates gradients") {
  Var x(Tensor::scalar(0.7), true);
  // f = tanh(x)*tanh(x) + 3*tanh(x); df/dx = (2*tanh(x)+3)*(1-tanh(x)^2)
  Var t = tanh_op(x);
  Var loss = add(mul(t, t), scale(t, 3.0));
  backward(loss);
  const double th = std::tanh(0.7);
  CHECK(x.grad()[0] == doctest::Approx((2 * th + 3) * (1 - th * th)));
}

TEST_CASE("no-grad mode builds constant results") {
  Var x(Tensor::scalar(2.0), true);
  {
    NoGradGuard ng;
    Var y = square(x);
    CHECK_FALSE(y.requires_grad());
  }
  Var y = square(x);
  CHECK(y.requires_grad());
}

TEST_CASE("detach stops gradient flow") {
  Var x(Tensor::scalar(2.0), true);
  Var d = x.detach();
  Var loss = mul(square(x), d);  // d treated as the constant 2
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(2.0 * 2.0 * 2.0));
}

TEST_CASE("frozen parameters receive no gradient") {
  Var x(Tensor::scalar(2.0), true);
  Var w(Tensor::scalar(3.0), true);
  w.set_requires_grad(false);
  Var loss = mul(square(x), w);
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(12.0));
  CHECK(w.grad().numel() == 0);
}

TEST_CASE("backward requires a scalar loss") {
  Var x(Tensor({2, 2}), true);
  CHECK_THROWS_AS(backward(x), ShapeMismatch);
}

TEST_CASE("determinism: identical inputs give bit-identical outputs") {
  Rng rng(16);
  Tensor xv = random_tensor({2, 3, 6, 6}, rng);
  Tensor wv = random_tensor({2, 3, 3, 3}, rng);
  Tensor bv = random_tensor({2}, rng);
  auto run = [&] {
    Var x(xv, false), w(wv, false), b(bv, false);
    return conv2d(x, w, b, 1, 1).value();
  };
  Tensor a = run(), b2 = run();
  for (int64_t i = 0; i < a.numel(); ++i) REQUIRE(a[i] == b2[i]);
}
