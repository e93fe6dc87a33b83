#include "gpsnet/netspec.hpp"

#include <algorithm>
#include <queue>
#include <set>

#include <fmt/format.h>

#include "gpsnet/errors.hpp"

namespace gpsnet {
namespace {

constexpr std::pair<NodeKind, std::string_view> kKindNames[] = {
    {NodeKind::kEntrance, "entrance"},
    {NodeKind::kSqueeze1x1, "squeeze1x1"},
    {NodeKind::kAtrous3x3, "atrous3x3"},
    {NodeKind::kExcite1x1, "excite1x1"},
    {NodeKind::kGateMerge, "gate_merge"},
    {NodeKind::kSumMerge, "sum_merge"},
    {NodeKind::kConcatMerge, "concat_merge"},
    {NodeKind::kExit, "exit"},
};

NodeSpec entrance(std::string id, std::size_t channels) {
  NodeSpec n;
  n.id = std::move(id);
  n.kind = NodeKind::kEntrance;
  n.out_ch = channels;
  return n;
}

NodeSpec conv_node(std::string id, NodeKind kind, std::size_t in_ch,
                   std::size_t out_ch, int dilation, int branch, int layer) {
  NodeSpec n;
  n.id = std::move(id);
  n.kind = kind;
  n.kernel = kind == NodeKind::kAtrous3x3 ? 3 : 1;
  n.dilation = kind == NodeKind::kAtrous3x3 ? dilation : 0;
  n.in_ch = in_ch;
  n.out_ch = out_ch;
  n.branch = branch;
  n.layer = layer;
  return n;
}

NodeSpec plain_node(std::string id, NodeKind kind, int branch = 0,
                    int layer = 0) {
  NodeSpec n;
  n.id = std::move(id);
  n.kind = kind;
  n.branch = branch;
  n.layer = layer;
  return n;
}

void check_dilations(std::span<const int> dilations, const char* who) {
  if (dilations.empty()) {
    throw ConfigError(fmt::format("{}: empty dilation list", who));
  }
  for (int r : dilations) {
    if (r < 1) throw ConfigError(fmt::format("{}: dilation {} < 1", who, r));
  }
}

void warn_duplicates(std::span<const int> dilations, const char* who,
                     Warnings* warnings) {
  std::set<int> seen;
  for (int r : dilations) {
    if (!seen.insert(r).second && warnings != nullptr) {
      warnings->push_back(fmt::format(
          "{}: duplicate dilation {}; closed-form sample counts will not "
          "apply",
          who, r));
    }
  }
}

}  // namespace

std::string_view to_string(NodeKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

std::optional<NodeKind> parse_node_kind(std::string_view text) {
  for (const auto& [k, name] : kKindNames) {
    if (name == text) return k;
  }
  return std::nullopt;
}

bool is_conv(NodeKind kind) {
  return kind == NodeKind::kSqueeze1x1 || kind == NodeKind::kAtrous3x3 ||
         kind == NodeKind::kExcite1x1;
}

bool is_merge(NodeKind kind) {
  return kind == NodeKind::kGateMerge || kind == NodeKind::kSumMerge ||
         kind == NodeKind::kConcatMerge;
}

std::string_view to_string(EdgeRole role) {
  return role == EdgeRole::kVertical ? "vertical" : "horizontal";
}

std::optional<EdgeRole> parse_edge_role(std::string_view text) {
  if (text == "horizontal") return EdgeRole::kHorizontal;
  if (text == "vertical") return EdgeRole::kVertical;
  return std::nullopt;
}

const NodeSpec* GraphSpec::find(std::string_view id) const {
  for (const NodeSpec& n : nodes) {
    if (n.id == id) return &n;
  }
  return nullptr;
}

const NodeSpec& GraphSpec::node(std::string_view id) const {
  const NodeSpec* n = find(id);
  if (n == nullptr) {
    throw UsageError(fmt::format("graph '{}' has no node '{}'", name, id));
  }
  return *n;
}

std::vector<const EdgeSpec*> GraphSpec::incoming(std::string_view id) const {
  std::vector<const EdgeSpec*> out;
  for (const EdgeSpec& e : edges) {
    if (e.to == id) out.push_back(&e);
  }
  return out;
}

std::vector<const EdgeSpec*> GraphSpec::outgoing(std::string_view id) const {
  std::vector<const EdgeSpec*> out;
  for (const EdgeSpec& e : edges) {
    if (e.from == id) out.push_back(&e);
  }
  return out;
}

const GateSpec* GraphSpec::gate_for(std::string_view merge_id) const {
  for (const GateSpec& g : gates) {
    if (g.merge == merge_id) return &g;
  }
  return nullptr;
}

bool ValidationResult::has(std::string_view code) const {
  return std::any_of(violations.begin(), violations.end(),
                     [code](const Violation& v) { return v.code == code; });
}

std::string ValidationResult::summary() const {
  std::string out;
  for (const Violation& v : violations) {
    if (!out.empty()) out += '\n';
    out += fmt::format("{}: {}", v.code, v.message);
  }
  return out;
}

namespace {

// Kahn's algorithm; returns the visited prefix (shorter than nodes on a cycle).
std::vector<std::string> kahn(const GraphSpec& g) {
  std::map<std::string, int> indegree;
  std::map<std::string, std::vector<std::string>> succ;
  for (const NodeSpec& n : g.nodes) indegree.emplace(n.id, 0);
  for (const EdgeSpec& e : g.edges) {
    if (!indegree.contains(e.from) || !indegree.contains(e.to)) continue;
    ++indegree[e.to];
    succ[e.from].push_back(e.to);
  }
  std::priority_queue<std::string, std::vector<std::string>, std::greater<>>
      ready;
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.push(id);
  }
  std::vector<std::string> order;
  while (!ready.empty()) {
    std::string id = ready.top();
    ready.pop();
    order.push_back(id);
    for (const std::string& s : succ[id]) {
      if (--indegree[s] == 0) ready.push(s);
    }
  }
  return order;
}

// Channel propagation over a topological order; reports mismatches.
std::map<std::string, std::size_t> propagate_channels(
    const GraphSpec& g, const std::vector<std::string>& order,
    std::vector<Violation>* violations) {
  std::map<std::string, std::size_t> ch;
  auto fail = [&](std::string msg) {
    if (violations != nullptr) {
      violations->push_back(Violation{"channels", std::move(msg)});
    }
  };
  for (const std::string& id : order) {
    const NodeSpec& n = *g.find(id);
    const auto in = g.incoming(id);
    std::vector<std::size_t> in_ch;
    for (const EdgeSpec* e : in) {
      auto it = ch.find(e->from);
      in_ch.push_back(it == ch.end() ? 0 : it->second);
    }
    switch (n.kind) {
      case NodeKind::kEntrance:
        ch[id] = n.out_ch;
        break;
      case NodeKind::kSqueeze1x1:
      case NodeKind::kAtrous3x3:
      case NodeKind::kExcite1x1:
        if (in_ch.size() == 1 && in_ch[0] != n.in_ch) {
          fail(fmt::format("node '{}' expects {} input channels, receives {}",
                           id, n.in_ch, in_ch[0]));
        }
        ch[id] = n.out_ch;
        break;
      case NodeKind::kGateMerge:
      case NodeKind::kSumMerge: {
        std::size_t c = in_ch.empty() ? 0 : in_ch[0];
        for (std::size_t v : in_ch) {
          if (v != c) {
            fail(fmt::format("merge '{}' combines inputs with {} and {} "
                             "channels",
                             id, c, v));
            break;
          }
        }
        ch[id] = c;
        break;
      }
      case NodeKind::kConcatMerge:
      case NodeKind::kExit: {
        std::size_t c = 0;
        for (std::size_t v : in_ch) c += v;
        ch[id] = c;
        break;
      }
    }
  }
  return ch;
}

}  // namespace

ValidationResult validate(const GraphSpec& g) {
  ValidationResult r;
  auto add = [&r](std::string code, std::string msg) {
    r.violations.push_back(Violation{std::move(code), std::move(msg)});
  };

  if (g.nodes.empty()) {
    add("empty", "graph has no nodes");
    return r;
  }

  std::set<std::string> ids;
  for (const NodeSpec& n : g.nodes) {
    if (n.id.empty()) add("id", "node with empty id");
    if (!ids.insert(n.id).second) {
      add("duplicate id", fmt::format("node id '{}' appears twice", n.id));
    }
  }

  bool edges_ok = true;
  for (std::size_t i = 0; i < g.edges.size(); ++i) {
    const EdgeSpec& e = g.edges[i];
    for (const std::string* end : {&e.from, &e.to}) {
      if (!ids.contains(*end)) {
        add("dangling edge", fmt::format("edges[{}] refers to unknown node '{}'",
                                         i, *end));
        edges_ok = false;
      }
    }
    if (e.from == e.to) add("cycle", fmt::format("self-loop on '{}'", e.from));
  }

  int entrances = 0;
  int exits = 0;
  for (const NodeSpec& n : g.nodes) {
    const auto in = g.incoming(n.id);
    const auto out = g.outgoing(n.id);
    if (is_conv(n.kind)) {
      const int want_k = n.kind == NodeKind::kAtrous3x3 ? 3 : 1;
      if (n.kernel != want_k) {
        add("kernel", fmt::format("node '{}' ({}) has kernel {}, expected {}",
                                  n.id, to_string(n.kind), n.kernel, want_k));
      }
      if (n.in_ch == 0 || n.out_ch == 0) {
        add("channels",
            fmt::format("conv node '{}' needs positive in_ch/out_ch", n.id));
      }
      if (in.size() != 1) {
        add("conv arity", fmt::format("conv node '{}' has {} inputs, needs 1",
                                      n.id, in.size()));
      }
    } else if (n.kernel != 0) {
      add("kernel", fmt::format("non-conv node '{}' has a kernel", n.id));
    }
    if (n.kind == NodeKind::kAtrous3x3) {
      if (n.dilation < 1) {
        add("dilation",
            fmt::format("atrous node '{}' needs dilation >= 1", n.id));
      }
    } else if (n.dilation != 0) {
      add("dilation", fmt::format("node '{}' ({}) must not carry a dilation",
                                  n.id, to_string(n.kind)));
    }
    if (n.kind == NodeKind::kEntrance) {
      ++entrances;
      if (!in.empty()) {
        add("entrance", fmt::format("entrance '{}' has inputs", n.id));
      }
      if (n.out_ch == 0) {
        add("channels", fmt::format("entrance '{}' needs out_ch", n.id));
      }
    } else if (in.empty()) {
      add("reachability", fmt::format("node '{}' has no input", n.id));
    }
    if (n.kind == NodeKind::kExit) {
      ++exits;
      if (!out.empty()) add("exit", fmt::format("exit '{}' has outputs", n.id));
    } else if (out.empty()) {
      add("reachability", fmt::format("node '{}' has no output", n.id));
    }
    if (n.kind == NodeKind::kGateMerge) {
      const bool two_roles =
          in.size() == 2 && in[0]->role != in[1]->role;
      if (!two_roles) {
        add("gate arity",
            fmt::format("gate_merge '{}' needs exactly one vertical and one "
                        "horizontal input, has {}",
                        n.id, in.size()));
      }
      const GateSpec* gate = g.gate_for(n.id);
      if (gate == nullptr) {
        add("gate attachment",
            fmt::format("gate_merge '{}' has no gate entry", n.id));
      } else if (two_roles) {
        const EdgeSpec* v = in[0]->role == EdgeRole::kVertical ? in[0] : in[1];
        const EdgeSpec* h = in[0]->role == EdgeRole::kVertical ? in[1] : in[0];
        if (gate->vertical != v->from || gate->horizontal != h->from) {
          add("gate attachment",
              fmt::format("gate on '{}' names inputs ({}, {}), edges give "
                          "({}, {})",
                          n.id, gate->vertical, gate->horizontal, v->from,
                          h->from));
        }
      }
    }
  }
  if (entrances == 0) add("entrance", "graph has no entrance node");
  if (exits == 0) add("exit", "graph has no exit node");

  std::set<std::string> gated;
  for (const GateSpec& gate : g.gates) {
    const NodeSpec* m = g.find(gate.merge);
    if (m == nullptr || m->kind != NodeKind::kGateMerge) {
      add("gate attachment",
          fmt::format("gate refers to '{}', which is not a gate_merge node",
                      gate.merge));
    }
    if (!gated.insert(gate.merge).second) {
      add("gate attachment",
          fmt::format("gate_merge '{}' has more than one gate", gate.merge));
    }
  }

  if (!edges_ok) return r;

  const auto order = kahn(g);
  if (order.size() != g.nodes.size()) {
    add("cycle", fmt::format("graph '{}' contains a cycle ({} of {} nodes "
                             "orderable)",
                             g.name, order.size(), g.nodes.size()));
    return r;
  }

  // Forward reachability from entrances, backward from exits.
  std::set<std::string> fwd;
  std::set<std::string> bwd;
  for (const std::string& id : order) {
    const NodeSpec& n = *g.find(id);
    if (n.kind == NodeKind::kEntrance) fwd.insert(id);
    for (const EdgeSpec* e : g.incoming(id)) {
      if (fwd.contains(e->from)) fwd.insert(id);
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const NodeSpec& n = *g.find(*it);
    if (n.kind == NodeKind::kExit) bwd.insert(*it);
    for (const EdgeSpec* e : g.outgoing(*it)) {
      if (bwd.contains(e->to)) bwd.insert(*it);
    }
  }
  for (const NodeSpec& n : g.nodes) {
    if (!fwd.contains(n.id)) {
      add("reachability",
          fmt::format("node '{}' is not reachable from an entrance", n.id));
    } else if (!bwd.contains(n.id)) {
      add("reachability", fmt::format("node '{}' does not reach an exit", n.id));
    }
  }

  propagate_channels(g, order, &r.violations);
  return r;
}

void require_valid(const GraphSpec& graph) {
  const ValidationResult r = validate(graph);
  if (!r.ok()) {
    throw ValidationError(
        fmt::format("graph '{}' is invalid:\n{}", graph.name, r.summary()));
  }
}

std::vector<std::string> topological_order(const GraphSpec& graph) {
  auto order = kahn(graph);
  if (order.size() != graph.nodes.size()) {
    throw ValidationError(
        fmt::format("graph '{}' contains a cycle", graph.name));
  }
  return order;
}

std::map<std::string, std::size_t> output_channels(const GraphSpec& graph) {
  return propagate_channels(graph, topological_order(graph), nullptr);
}

int longest_dilation_path(const GraphSpec& graph) {
  std::map<std::string, int> reach;
  int best = 0;
  for (const std::string& id : topological_order(graph)) {
    const NodeSpec& n = graph.node(id);
    int in = 0;
    for (const EdgeSpec* e : graph.incoming(id)) {
      in = std::max(in, reach[e->from]);
    }
    int own = 0;
    if (is_conv(n.kind)) own = std::max(n.dilation, 1) * (n.kernel - 1) / 2;
    reach[id] = in + own;
    best = std::max(best, reach[id]);
  }
  return best;
}

GraphSpec build_aspp(std::span<const int> dilations, std::size_t in_ch,
                     std::size_t branch_ch, Warnings* warnings) {
  check_dilations(dilations, "build_aspp");
  warn_duplicates(dilations, "build_aspp", warnings);
  GraphSpec g;
  std::string rates;
  for (int r : dilations) rates += (rates.empty() ? "" : ",") + std::to_string(r);
  g.name = fmt::format("aspp{{{}}}", rates);
  g.nodes.push_back(entrance("in", in_ch));
  NodeSpec concat = plain_node("concat", NodeKind::kConcatMerge);
  for (std::size_t b = 0; b < dilations.size(); ++b) {
    const int bi = static_cast<int>(b) + 1;
    const std::string id = fmt::format("b{}.conv", bi);
    g.nodes.push_back(conv_node(id, NodeKind::kAtrous3x3, in_ch, branch_ch,
                                dilations[b], bi, 1));
    g.edges.push_back(EdgeSpec{"in", id, EdgeRole::kHorizontal});
    g.edges.push_back(EdgeSpec{id, "concat", EdgeRole::kHorizontal});
  }
  g.nodes.push_back(concat);
  g.nodes.push_back(plain_node("out", NodeKind::kExit));
  g.edges.push_back(EdgeSpec{"concat", "out", EdgeRole::kHorizontal});
  return g;
}

GraphSpec build_denseaspp(std::span<const int> dilations, std::size_t in_ch,
                          std::size_t growth_ch, std::size_t bottleneck_ch,
                          Warnings* warnings) {
  check_dilations(dilations, "build_denseaspp");
  std::vector<int> rates(dilations.begin(), dilations.end());
  if (!std::is_sorted(rates.begin(), rates.end())) {
    std::stable_sort(rates.begin(), rates.end());
    if (warnings != nullptr) {
      warnings->push_back("build_denseaspp: dilations sorted ascending");
    }
  }
  warn_duplicates(rates, "build_denseaspp", warnings);

  GraphSpec g;
  std::string text;
  for (int r : rates) text += (text.empty() ? "" : ",") + std::to_string(r);
  g.name = fmt::format("denseaspp{{{}}}", text);
  g.nodes.push_back(entrance("in", in_ch));

  std::vector<std::string> produced{"in"};
  std::size_t channels = in_ch;
  for (std::size_t l = 0; l < rates.size(); ++l) {
    const int li = static_cast<int>(l) + 1;
    std::string feed = "in";
    if (produced.size() > 1) {
      feed = fmt::format("l{}.concat", li);
      g.nodes.push_back(plain_node(feed, NodeKind::kConcatMerge, 1, li));
      for (const std::string& p : produced) {
        g.edges.push_back(EdgeSpec{p, feed, EdgeRole::kHorizontal});
      }
    }
    std::size_t conv_in = channels;
    if (bottleneck_ch > 0) {
      const std::string sq = fmt::format("l{}.squeeze", li);
      g.nodes.push_back(conv_node(sq, NodeKind::kSqueeze1x1, channels,
                                  bottleneck_ch, 0, 1, li));
      g.edges.push_back(EdgeSpec{feed, sq, EdgeRole::kHorizontal});
      feed = sq;
      conv_in = bottleneck_ch;
    }
    const std::string conv = fmt::format("l{}.conv", li);
    g.nodes.push_back(conv_node(conv, NodeKind::kAtrous3x3, conv_in, growth_ch,
                                rates[l], 1, li));
    g.edges.push_back(EdgeSpec{feed, conv, EdgeRole::kHorizontal});
    produced.push_back(conv);
    channels += growth_ch;
  }
  g.nodes.push_back(plain_node("concat", NodeKind::kConcatMerge));
  for (const std::string& p : produced) {
    g.edges.push_back(EdgeSpec{p, "concat", EdgeRole::kHorizontal});
  }
  g.nodes.push_back(plain_node("out", NodeKind::kExit));
  g.edges.push_back(EdgeSpec{"concat", "out", EdgeRole::kHorizontal});
  return g;
}

GraphSpec build_supernet(std::span<const DilationPair> grid, std::size_t in_ch,
                         std::size_t bottleneck_ch, std::size_t out_ch,
                         bool gated) {
  if (grid.empty()) throw ConfigError("build_supernet: empty dilation grid");
  for (const DilationPair& p : grid) {
    if (p.first < 1 || p.second < 1) {
      throw ConfigError(fmt::format("build_supernet: dilation pair ({},{})",
                                    p.first, p.second));
    }
  }
  GraphSpec g;
  std::string text;
  for (const DilationPair& p : grid) {
    text += fmt::format("{}({},{})", text.empty() ? "" : ",", p.first, p.second);
  }
  g.name = fmt::format("{}{{{}}}", gated ? "gps" : "supernet", text);
  g.nodes.push_back(entrance("in", in_ch));
  const NodeKind merge_kind =
      gated ? NodeKind::kGateMerge : NodeKind::kSumMerge;

  for (std::size_t b = 0; b < grid.size(); ++b) {
    const int bi = static_cast<int>(b) + 1;
    const std::string squeeze = fmt::format("b{}.squeeze", bi);
    g.nodes.push_back(conv_node(squeeze, NodeKind::kSqueeze1x1, in_ch,
                                bottleneck_ch, 0, bi, 0));
    g.edges.push_back(EdgeSpec{"in", squeeze, EdgeRole::kHorizontal});

    std::string horizontal = squeeze;
    const int rates[2] = {grid[b].first, grid[b].second};
    for (int l = 1; l <= 2; ++l) {
      const std::string conv = fmt::format("b{}.l{}.conv", bi, l);
      std::string feed = horizontal;
      if (b > 0) {
        const std::string merge = fmt::format("b{}.l{}.merge", bi, l);
        const std::string vertical = fmt::format("b{}.l{}.conv", bi - 1, l);
        g.nodes.push_back(plain_node(merge, merge_kind, bi, l));
        g.edges.push_back(EdgeSpec{vertical, merge, EdgeRole::kVertical});
        g.edges.push_back(EdgeSpec{horizontal, merge, EdgeRole::kHorizontal});
        if (gated) g.gates.push_back(GateSpec{merge, vertical, horizontal});
        feed = merge;
      }
      g.nodes.push_back(conv_node(conv, NodeKind::kAtrous3x3, bottleneck_ch,
                                  bottleneck_ch, rates[l - 1], bi, l));
      g.edges.push_back(EdgeSpec{feed, conv, EdgeRole::kHorizontal});
      horizontal = conv;
    }
    const std::string excite = fmt::format("b{}.excite", bi);
    g.nodes.push_back(conv_node(excite, NodeKind::kExcite1x1, bottleneck_ch,
                                out_ch, 0, bi, 3));
    g.edges.push_back(EdgeSpec{horizontal, excite, EdgeRole::kHorizontal});
  }
  g.nodes.push_back(plain_node("concat", NodeKind::kConcatMerge));
  for (std::size_t b = 0; b < grid.size(); ++b) {
    g.edges.push_back(EdgeSpec{fmt::format("b{}.excite", b + 1), "concat",
                               EdgeRole::kHorizontal});
  }
  g.nodes.push_back(plain_node("out", NodeKind::kExit));
  g.edges.push_back(EdgeSpec{"concat", "out", EdgeRole::kHorizontal});
  return g;
}

GraphSpec build_serial(std::span<const int> dilations, std::size_t channels) {
  GraphSpec g;
  std::string text;
  for (int r : dilations) {
    if (r < 1) throw ConfigError(fmt::format("build_serial: dilation {}", r));
    text += (text.empty() ? "" : ",") + std::to_string(r);
  }
  g.name = fmt::format("serial{{{}}}", text);
  g.nodes.push_back(entrance("in", channels));
  std::string prev = "in";
  for (std::size_t i = 0; i < dilations.size(); ++i) {
    const int li = static_cast<int>(i) + 1;
    const std::string id = fmt::format("l{}.conv", li);
    g.nodes.push_back(conv_node(id, NodeKind::kAtrous3x3, channels, channels,
                                dilations[i], 1, li));
    g.edges.push_back(EdgeSpec{prev, id, EdgeRole::kHorizontal});
    prev = id;
  }
  g.nodes.push_back(plain_node("out", NodeKind::kExit));
  g.edges.push_back(EdgeSpec{prev, "out", EdgeRole::kHorizontal});
  return g;
}

std::vector<DilationPair> untuned_grid() {
  return {{1, 1}, {12, 12}, {24, 24}, {36, 36}};
}

std::vector<DilationPair> tuned_grid() {
  return {{1, 3}, {11, 13}, {23, 29}, {33, 37}};
}

}  // namespace gpsnet
