#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gpsnet/netspec.hpp"

namespace gpsnet {

// Channel widths used to instantiate the builtin graphs.
struct ChannelConfig {
  std::size_t in_ch = 2048;
  std::size_t aspp_branch = 256;
  std::size_t dense_growth = 256;
  std::size_t dense_bottleneck = 512;
  std::size_t squeeze = 256;     // SuperNet bottleneck width c
  std::size_t branch_out = 256;  // SuperNet excitation width
};

// Widths for the model-analysis comparison (2048-channel backbone features).
ChannelConfig analysis_channels();
// Small widths for runtime work: c = 64, excitation 128.
ChannelConfig desk_channels(std::size_t in_ch);

// aspp, denseaspp, supernet-untuned, supernet-tuned, gps-untuned, gps-tuned.
const std::vector<std::string>& builtin_names();
bool is_builtin(std::string_view name);

// Throws ConfigError for an unknown name.
GraphSpec builtin_graph(std::string_view name, const ChannelConfig& channels);

}  // namespace gpsnet
