#include "gpsnet/builtins.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "gpsnet/errors.hpp"

namespace gpsnet {
namespace {

constexpr int kPyramidRates[] = {1, 12, 24, 36};

}  // namespace

ChannelConfig analysis_channels() { return ChannelConfig{}; }

ChannelConfig desk_channels(std::size_t in_ch) {
  return ChannelConfig{in_ch, 64, 32, 64, 64, 128};
}

const std::vector<std::string>& builtin_names() {
  static const std::vector<std::string> names{
      "aspp",           "denseaspp",   "supernet-untuned",
      "supernet-tuned", "gps-untuned", "gps-tuned"};
  return names;
}

bool is_builtin(std::string_view name) {
  const auto& names = builtin_names();
  return std::find(names.begin(), names.end(), name) != names.end();
}

GraphSpec builtin_graph(std::string_view name, const ChannelConfig& ch) {
  GraphSpec g;
  if (name == "aspp") {
    g = build_aspp(kPyramidRates, ch.in_ch, ch.aspp_branch);
  } else if (name == "denseaspp") {
    g = build_denseaspp(kPyramidRates, ch.in_ch, ch.dense_growth,
                        ch.dense_bottleneck);
  } else if (name == "supernet-untuned" || name == "gps-untuned" ||
             name == "supernet-tuned" || name == "gps-tuned") {
    const bool gated = name.starts_with("gps");
    const auto grid = name.ends_with("untuned") ? untuned_grid() : tuned_grid();
    g = build_supernet(grid, ch.in_ch, ch.squeeze, ch.branch_out, gated);
  } else {
    throw ConfigError(fmt::format("unknown builtin graph '{}'", name));
  }
  g.name = std::string(name);
  return g;
}

}  // namespace gpsnet
