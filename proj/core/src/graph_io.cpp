#include "gpsnet/graph_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "gpsnet/errors.hpp"

namespace gpsnet {
namespace {

using nlohmann::json;

constexpr int kFormatVersion = 1;

json to_json(const NodeSpec& n) {
  json j;
  j["id"] = n.id;
  j["kind"] = std::string(to_string(n.kind));
  j["branch"] = n.branch;
  j["layer"] = n.layer;
  if (is_conv(n.kind)) {
    j["kernel"] = n.kernel;
    j["in_ch"] = n.in_ch;
    j["out_ch"] = n.out_ch;
  }
  if (n.kind == NodeKind::kAtrous3x3) j["dilation"] = n.dilation;
  if (n.kind == NodeKind::kEntrance) j["out_ch"] = n.out_ch;
  return j;
}

const json& field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError(fmt::format("{}: missing field '{}'", where, key));
  }
  return *it;
}

std::string get_string(const json& obj, const char* key,
                       const std::string& where) {
  const json& v = field(obj, key, where);
  if (!v.is_string()) {
    throw ParseError(fmt::format("{}.{}: expected a string", where, key));
  }
  return v.get<std::string>();
}

long long get_int(const json& obj, const char* key, const std::string& where,
                  long long fallback, bool required) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) {
      throw ParseError(fmt::format("{}: missing field '{}'", where, key));
    }
    return fallback;
  }
  if (!it->is_number_integer()) {
    throw ParseError(fmt::format("{}.{}: expected an integer", where, key));
  }
  return it->get<long long>();
}

std::size_t get_count(const json& obj, const char* key,
                      const std::string& where, bool required) {
  const long long v = get_int(obj, key, where, 0, required);
  if (v < 0) {
    throw ParseError(fmt::format("{}.{}: negative value {}", where, key, v));
  }
  return static_cast<std::size_t>(v);
}

const json& get_array(const json& obj, const char* key) {
  const json& v = field(obj, key, "graph");
  if (!v.is_array()) {
    throw ParseError(fmt::format("graph.{}: expected an array", key));
  }
  return v;
}

}  // namespace

std::string serialize(const GraphSpec& graph) {
  json root;
  root["format"] = "gpsnet-graph";
  root["version"] = kFormatVersion;
  root["name"] = graph.name;
  root["nodes"] = json::array();
  for (const NodeSpec& n : graph.nodes) root["nodes"].push_back(to_json(n));
  root["edges"] = json::array();
  for (const EdgeSpec& e : graph.edges) {
    root["edges"].push_back(
        {{"from", e.from}, {"to", e.to}, {"role", std::string(to_string(e.role))}});
  }
  root["gates"] = json::array();
  for (const GateSpec& g : graph.gates) {
    root["gates"].push_back({{"merge", g.merge},
                             {"vertical", g.vertical},
                             {"horizontal", g.horizontal}});
  }
  return root.dump(2) + "\n";
}

GraphSpec parse_graph(std::string_view text) {
  json root;
  try {
    root = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("malformed JSON at byte {}: {}", e.byte,
                                 e.what()));
  }
  if (!root.is_object()) throw ParseError("graph: expected a JSON object");
  if (auto it = root.find("version"); it != root.end()) {
    if (!it->is_number_integer() || it->get<int>() != kFormatVersion) {
      throw ParseError(fmt::format("graph.version: unsupported value {}",
                                   it->dump()));
    }
  }

  GraphSpec g;
  if (auto it = root.find("name"); it != root.end()) {
    if (!it->is_string()) throw ParseError("graph.name: expected a string");
    g.name = it->get<std::string>();
  }

  const json& nodes = get_array(root, "nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string where = fmt::format("nodes[{}]", i);
    const json& jn = nodes[i];
    if (!jn.is_object()) throw ParseError(where + ": expected an object");
    NodeSpec n;
    n.id = get_string(jn, "id", where);
    const std::string kind = get_string(jn, "kind", where);
    auto parsed = parse_node_kind(kind);
    if (!parsed) {
      throw ParseError(
          fmt::format("{}.kind: unknown node kind '{}' (node '{}')", where, kind,
                      n.id));
    }
    n.kind = *parsed;
    const std::string at = fmt::format("{} ('{}')", where, n.id);
    n.branch = static_cast<int>(get_int(jn, "branch", at, 0, false));
    n.layer = static_cast<int>(get_int(jn, "layer", at, 0, false));
    n.kernel = static_cast<int>(get_int(jn, "kernel", at, 0, is_conv(n.kind)));
    n.dilation = static_cast<int>(
        get_int(jn, "dilation", at, 0, n.kind == NodeKind::kAtrous3x3));
    n.in_ch = get_count(jn, "in_ch", at, is_conv(n.kind));
    n.out_ch = get_count(jn, "out_ch", at,
                         is_conv(n.kind) || n.kind == NodeKind::kEntrance);
    g.nodes.push_back(std::move(n));
  }

  const json& edges = get_array(root, "edges");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const std::string where = fmt::format("edges[{}]", i);
    const json& je = edges[i];
    if (!je.is_object()) throw ParseError(where + ": expected an object");
    EdgeSpec e;
    e.from = get_string(je, "from", where);
    e.to = get_string(je, "to", where);
    const std::string role = get_string(je, "role", where);
    auto parsed = parse_edge_role(role);
    if (!parsed) {
      throw ParseError(fmt::format("{}.role: unknown role '{}'", where, role));
    }
    e.role = *parsed;
    g.edges.push_back(std::move(e));
  }

  if (root.contains("gates")) {
    const json& gates = get_array(root, "gates");
    for (std::size_t i = 0; i < gates.size(); ++i) {
      const std::string where = fmt::format("gates[{}]", i);
      if (!gates[i].is_object()) throw ParseError(where + ": expected an object");
      g.gates.push_back(GateSpec{get_string(gates[i], "merge", where),
                                 get_string(gates[i], "vertical", where),
                                 get_string(gates[i], "horizontal", where)});
    }
  }
  return g;
}

GraphSpec load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(fmt::format("cannot open graph file '{}'", path));
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_graph(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(fmt::format("{}: {}", path, e.what()));
  }
}

}  // namespace gpsnet
