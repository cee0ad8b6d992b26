// Dense row-major double tensor, the value type of the autodiff graph.
#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace afc::nn {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(checked_numel(shape_), fill) {}
  Tensor(std::vector<int> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != checked_numel(shape_))
      throw ShapeMismatch("tensor data does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  double& at(int r, int c) { return data_[static_cast<size_t>(r) * shape_[1] + c]; }
  double at(int r, int c) const {
    return data_[static_cast<size_t>(r) * shape_[1] + c];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i)
      s += (i ? "," : "") + std::to_string(shape_[i]);
    return s + "]";
  }

 private:
  static int64_t checked_numel(const std::vector<int>& shape) {
    if (shape.empty()) throw ShapeMismatch("empty shape");
    int64_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeMismatch("non-positive dimension");
      n *= d;
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

}  // namespace afc::nn
