#pragma once

#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gpsnet/tensor.hpp"

namespace gpsnet {

// Central differences (f(θ + h e_i) - f(θ - h e_i)) / 2h for every coordinate.
std::vector<double> finite_diff_grad(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> theta, double step);

// Relative error used by all gradient checks: |a - b| / max(|a|, |b|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

struct SgdOptions {
  double momentum = 0.9;
  double weight_decay = 0.0005;
};

// SGD with heavy-ball momentum:
//   v <- momentum * v + grad + weight_decay * θ
//   θ <- θ - lr * v
// Velocity buffers are keyed by parameter name.
class Sgd {
 public:
  explicit Sgd(SgdOptions options) : options_(options) {}

  void step(const std::string& name, Tensor4& param, const Tensor4& grad,
            double lr);

  const SgdOptions& options() const { return options_; }
  const std::map<std::string, std::vector<double>>& velocity() const {
    return velocity_;
  }

 private:
  SgdOptions options_;
  std::map<std::string, std::vector<double>> velocity_;
};

}  // namespace gpsnet
