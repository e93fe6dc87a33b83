#pragma once

#include <string>
#include <string_view>

#include "gpsnet/netspec.hpp"

namespace gpsnet {

// Canonical JSON: sorted keys, two-space indent, integers only, trailing
// newline. Equal graphs serialize to identical bytes.
std::string serialize(const GraphSpec& graph);

// Structural parse only; call validate() for graph-level checks. Throws
// ParseError naming the offending location, e.g. "nodes[3].kind".
GraphSpec parse_graph(std::string_view text);

// Reads a file and parses it.
GraphSpec load_graph(const std::string& path);

}  // namespace gpsnet
