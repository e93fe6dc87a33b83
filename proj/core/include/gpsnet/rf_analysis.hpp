#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpsnet/netspec.hpp"
#include "gpsnet/samples.hpp"

namespace gpsnet {

// Receptive field and sample rate. rf_side is the side of the square support;
// rf_area = rf_side^2 is the SR denominator.
struct RfSrResult {
  std::string method;
  int rf_side = 0;
  long long rf_area = 0;
  std::size_t sample_count = 0;
  double sr = 0.0;
  std::optional<std::size_t> params;
  // rf_area == 0; sr is NaN.
  bool degenerate = false;
  // False when a closed-form count does not apply (e.g. repeated rates).
  bool closed_form_valid = true;
  std::vector<std::string> notes;
};

// Single k x k atrous conv: side r*k - r + 1, SR k^2 / side^2.
RfSrResult rf_sr_atrous(int kernel, int dilation);

// Parallel branches: side max(r)*(k-1) + 1, count B*k^2 - B + 1. With repeated
// rates the closed-form count is flagged and the exact count reported.
RfSrResult rf_sr_aspp(int kernel, std::span<const int> rates);

struct SerialLayer {
  int kernel = 3;
  int dilation = 1;
};

// Chain of convs: side sum(r_i * (k_i - 1)) + 1; the sample set is the
// iterated Minkowski sum of tap patterns, counted per axis.
RfSrResult rf_sr_serial(std::span<const SerialLayer> chain);

// Deformable conv over given sample positions, verbatim:
// RF = (max x - min x) * (max y - min y), SR = k^2 / RF. No +1 correction.
RfSrResult rf_sr_dcn(std::span<const Offset> positions, int kernel);

// RF/SR of an explicit sample set (side from its bounding box).
RfSrResult rf_sr_of_set(const SamplePositionSet& set, std::string method);

// RF = max over branches of the branch support side, SR = |∪ P_b| / RF^2.
// Falls back to exit sets for graphs without branch tags.
RfSrResult rf_sr_gps(const GraphSpec& graph);
RfSrResult rf_sr_gps(const SampleEnumeration& samples, std::string method);

}  // namespace gpsnet
