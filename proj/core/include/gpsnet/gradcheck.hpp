#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "gpsnet/gpsnet.hpp"
#include "gpsnet/tape.hpp"

namespace gpsnet {

struct GradcheckOptions {
  double step = 1e-3;
  double tol = 1e-4;
  // Coordinates checked per tensor; every coordinate when the tensor is
  // smaller. Coordinates whose +/- step evaluations take a different ReLU
  // branch than the base point are not differentiable over the stencil and
  // are replaced by other coordinates (up to max_attempts_factor times).
  std::size_t samples_per_block = 6;
  std::size_t max_attempts_factor = 8;
  std::uint64_t seed = 0;
  // Denominator floor of the relative error, scaled by max(1, largest
  // |analytic| over all blocks) so that exactly-zero gradients are compared
  // against the model's gradient scale rather than an absolute constant.
  double floor = 1e-6;
  // Test fixture: analytic gradients are scaled by (1 + corrupt).
  double corrupt = 0.0;
};

struct BlockCheck {
  std::string name;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  double max_rel_error = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<BlockCheck> blocks;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  bool pass = true;
};

// Builds a scalar loss on a fresh tape. Tensors in `blocks` must enter the
// graph through Tape::parameter so their gradients can be read back.
using LossBuilder = std::function<Var(Tape&)>;

// Compares backward() against central differences on sampled coordinates of
// each block. Tensors are restored afterwards.
GradcheckReport gradcheck(const LossBuilder& build,
                          const std::vector<NamedTensor>& blocks,
                          const GradcheckOptions& opts);

// Whole-model check with loss = <features, R> for a fixed random R; the
// input is checked as block "input". Batch norm runs in train mode without
// updating running statistics.
GradcheckReport gradcheck_model(SuperNetModel& model, const Tensor4& input,
                                const GradcheckOptions& opts);

// Gate-only check with loss = <O, R1> + <M_v', R2> + <M_h', R3>.
GradcheckReport gradcheck_gate(GateModule& gate, const Tensor4& x_v,
                               const Tensor4& x_h,
                               const GradcheckOptions& opts);

// Standard-normal tensor from `seed`.
Tensor4 random_tensor(Shape4 shape, std::uint64_t seed);

}  // namespace gpsnet
