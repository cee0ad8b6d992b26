#include <doctest.h>

#include "afc/nn/tensor.hpp"

using namespace afc::nn;

TEST_CASE("tensor shape and element access") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  t.at(1, 2) = 5.0;
  CHECK(t[5] == 5.0);
  CHECK(t.shape_str() == "[2,3]");
}

TEST_CASE("tensor data/shape mismatch throws") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0, 3.0}), ShapeMismatch);
  CHECK_THROWS_AS(Tensor({0, 2}), ShapeMismatch);
}

TEST_CASE("scalar helper") {
  Tensor s = Tensor::scalar(3.5);
  CHECK(s.numel() == 1);
  CHECK(s[0] == 3.5);
}
