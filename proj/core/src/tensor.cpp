#include "gpsnet/tensor.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "gpsnet/errors.hpp"

namespace gpsnet {

std::string Shape4::str() const {
  return fmt::format("({},{},{},{})", n, c, h, w);
}

Tensor4::Tensor4(Shape4 shape, double fill)
    : shape_(shape), values_(shape.numel(), fill) {}

Tensor4::Tensor4(Shape4 shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  if (values_.size() != shape_.numel()) {
    throw ShapeError(fmt::format("tensor of shape {} needs {} values, got {}",
                                 shape_.str(), shape_.numel(),
                                 values_.size()));
  }
}

Tensor4 Tensor4::scalar(double value) {
  return Tensor4(Shape4{1, 1, 1, 1}, std::vector<double>{value});
}

double Tensor4::item() const {
  if (values_.size() != 1) {
    throw ShapeError(
        fmt::format("item() on tensor of shape {}", shape_.str()));
  }
  return values_[0];
}

void Tensor4::fill(double value) {
  std::fill(values_.begin(), values_.end(), value);
}

bool Tensor4::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
  if (!(a == b)) {
    throw ShapeError(
        fmt::format("{}: shape mismatch {} vs {}", what, a.str(), b.str()));
  }
}

}  // namespace gpsnet
