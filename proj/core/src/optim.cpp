#include "gpsnet/optim.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "gpsnet/errors.hpp"

namespace gpsnet {

std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> theta, double step) {
  if (!(step > 0.0)) {
    throw ConfigError(fmt::format("finite_diff_grad: step {} <= 0", step));
  }
  std::vector<double> point(theta.begin(), theta.end());
  std::vector<double> grad(point.size());
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = point[i];
    point[i] = orig + step;
    const double up = f(point);
    point[i] = orig - step;
    const double down = f(point);
    point[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double relative_error(double analytic, double numeric, double floor) {
  const double scale =
      std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

void Sgd::step(const std::string& name, Tensor4& param, const Tensor4& grad,
               double lr) {
  require_same_shape(param.shape(), grad.shape(), "sgd step");
  auto& v = velocity_[name];
  if (v.empty()) v.assign(param.numel(), 0.0);
  if (v.size() != param.numel()) {
    throw ShapeError(fmt::format("sgd: velocity for '{}' changed size", name));
  }
  for (std::size_t i = 0; i < param.numel(); ++i) {
    v[i] = options_.momentum * v[i] + grad[i] +
           options_.weight_decay * param[i];
    param[i] -= lr * v[i];
  }
}

}  // namespace gpsnet
