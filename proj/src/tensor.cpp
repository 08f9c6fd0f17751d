#include "deeplight/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "deeplight/error.hpp"

namespace deeplight::nn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
  for (auto e : shape_) {
    if (e == 0) throw ConfigError("tensor extents must be positive, got " + shape_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                      shape_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ConfigError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void axpy(double alpha, const Tensor& x, Tensor& y) {
  if (x.size() != y.size()) throw ConfigError("axpy size mismatch");
  const double* xs = x.raw();
  double* ys = y.raw();
  for (std::size_t i = 0; i < x.size(); ++i) ys[i] += alpha * xs[i];
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) throw ConfigError("dot size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs(const Tensor& t) {
  double m = 0.0;
  for (double v : t.data()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace deeplight::nn
