#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace gpsnet {

// (batch, channel, height, width).
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t spatial() const { return h * w; }
  std::string str() const;

  friend bool operator==(const Shape4&, const Shape4&) = default;
};

// Dense rank-4 array of doubles in NCHW order. Plain value type: gradients
// live on the Tape that produced a tensor, not on the tensor itself.
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, double fill = 0.0);
  Tensor4(Shape4 shape, std::vector<double> values);

  static Tensor4 scalar(double value);

  const Shape4& shape() const { return shape_; }
  std::size_t numel() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> data() { return values_; }
  std::span<const double> data() const { return values_; }

  std::size_t index(std::size_t n, std::size_t c, std::size_t h,
                    std::size_t w) const {
    return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
  }
  double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return values_[index(n, c, h, w)];
  }
  double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return values_[index(n, c, h, w)];
  }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Value of a single-element tensor.
  double item() const;

  void fill(double value);
  bool all_finite() const;

 private:
  Shape4 shape_;
  std::vector<double> values_;
};

// Throws ShapeError with `what` as context when the shapes differ.
void require_same_shape(const Shape4& a, const Shape4& b, const char* what);

}  // namespace gpsnet
