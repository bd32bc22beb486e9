#include "sphcast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sphcast {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(numel(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
  if (data.size() != numel(shape)) {
    throw ShapeError("tensor data size " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
}

double Tensor::item() const {
  if (data.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape));
  return data[0];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t w = shape.empty() ? 1 : data.size() / shape[0];
  return std::span<double>(data).subspan(r * w, w);
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t w = shape.empty() ? 1 : data.size() / shape[0];
  return std::span<const double>(data).subspan(r * w, w);
}

bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape != b.shape) throw ShapeError("max_abs_diff: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace sphcast
