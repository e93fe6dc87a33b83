#include "gpsnet/rf_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "gpsnet/errors.hpp"

namespace gpsnet {
namespace {

void require_odd(int kernel, const char* who) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError(fmt::format("{}: kernel {} unsupported (odd only)", who,
                                  kernel));
  }
}

RfSrResult finish(std::string method, int side, std::size_t count) {
  RfSrResult r;
  r.method = std::move(method);
  r.rf_side = side;
  r.rf_area = static_cast<long long>(side) * side;
  r.sample_count = count;
  r.sr = static_cast<double>(count) / static_cast<double>(r.rf_area);
  return r;
}

}  // namespace

RfSrResult rf_sr_atrous(int kernel, int dilation) {
  require_odd(kernel, "rf_sr_atrous");
  if (dilation < 1) {
    throw ConfigError(fmt::format("rf_sr_atrous: dilation {} < 1", dilation));
  }
  const int side = dilation * kernel - dilation + 1;
  return finish("atrous", side, static_cast<std::size_t>(kernel * kernel));
}

RfSrResult rf_sr_aspp(int kernel, std::span<const int> rates) {
  require_odd(kernel, "rf_sr_aspp");
  if (rates.empty()) throw ConfigError("rf_sr_aspp: no rates");
  for (int r : rates) {
    if (r < 1) throw ConfigError(fmt::format("rf_sr_aspp: rate {} < 1", r));
  }
  const int max_rate = *std::max_element(rates.begin(), rates.end());
  const int side = max_rate * (kernel - 1) + 1;
  const std::size_t branches = rates.size();
  const std::size_t k2 = static_cast<std::size_t>(kernel * kernel);
  std::set<int> distinct(rates.begin(), rates.end());
  if (distinct.size() == branches) {
    return finish("aspp", side, branches * k2 - branches + 1);
  }
  SamplePositionSet u;
  for (int r : rates) u = u.united(SamplePositionSet::origin().dilated(kernel, r));
  RfSrResult res = finish("aspp", side, u.size());
  res.closed_form_valid = false;
  res.notes.push_back(fmt::format(
      "repeated rates: closed-form count {} does not apply, exact count {}",
      branches * k2 - branches + 1, u.size()));
  return res;
}

RfSrResult rf_sr_serial(std::span<const SerialLayer> chain) {
  // The tap pattern is a product set, so the chain's samples are the square
  // of the 1-D Minkowski sum.
  std::set<int> axis{0};
  int side = 1;
  for (const SerialLayer& layer : chain) {
    require_odd(layer.kernel, "rf_sr_serial");
    if (layer.dilation < 1) {
      throw ConfigError(
          fmt::format("rf_sr_serial: dilation {} < 1", layer.dilation));
    }
    side += layer.dilation * (layer.kernel - 1);
    const int half = (layer.kernel - 1) / 2;
    std::set<int> next;
    for (int p : axis) {
      for (int t = -half; t <= half; ++t) next.insert(p + t * layer.dilation);
    }
    axis = std::move(next);
  }
  return finish("serial", side, axis.size() * axis.size());
}

RfSrResult rf_sr_dcn(std::span<const Offset> positions, int kernel) {
  require_odd(kernel, "rf_sr_dcn");
  if (positions.empty()) throw ConfigError("rf_sr_dcn: no sample positions");
  int min_x = positions[0].dx, max_x = positions[0].dx;
  int min_y = positions[0].dy, max_y = positions[0].dy;
  for (const Offset& p : positions) {
    min_x = std::min(min_x, p.dx);
    max_x = std::max(max_x, p.dx);
    min_y = std::min(min_y, p.dy);
    max_y = std::max(max_y, p.dy);
  }
  RfSrResult r;
  r.method = "dcn";
  r.rf_area = static_cast<long long>(max_x - min_x) * (max_y - min_y);
  r.sample_count = static_cast<std::size_t>(kernel * kernel);
  r.notes.push_back(
      "RF is (max x - min x) * (max y - min y) without the +1 used for "
      "atrous RF");
  if (r.rf_area == 0) {
    r.degenerate = true;
    r.sr = std::numeric_limits<double>::quiet_NaN();
    r.notes.push_back("degenerate: zero RF, SR undefined");
  } else {
    r.sr = static_cast<double>(r.sample_count) / static_cast<double>(r.rf_area);
  }
  return r;
}

RfSrResult rf_sr_of_set(const SamplePositionSet& set, std::string method) {
  return finish(std::move(method), set.side(), set.size());
}

RfSrResult rf_sr_gps(const SampleEnumeration& samples, std::string method) {
  int side = 0;
  if (samples.branches.empty()) {
    for (const auto& [id, set] : samples.exits) side = std::max(side, set.side());
  } else {
    for (const auto& [b, set] : samples.branches) {
      side = std::max(side, set.side());
    }
  }
  return finish(std::move(method), side, samples.branch_union.size());
}

RfSrResult rf_sr_gps(const GraphSpec& graph) {
  return rf_sr_gps(enumerate_samples(graph), "gps");
}

}  // namespace gpsnet
