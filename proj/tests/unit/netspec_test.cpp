#include <doctest.h>

#include <algorithm>

#include "gpsnet/builtins.hpp"
#include "gpsnet/errors.hpp"
#include "gpsnet/graph_io.hpp"
#include "gpsnet/netspec.hpp"
#include "oracles.hpp"

using namespace gpsnet;

namespace {

int count_kind(const GraphSpec& g, NodeKind k) {
  return static_cast<int>(std::count_if(g.nodes.begin(), g.nodes.end(),
                                        [&](const NodeSpec& n) { return n.kind == k; }));
}

std::vector<GraphSpec> canonical_graphs() {
  std::vector<GraphSpec> out;
  for (const std::string& name : builtin_names()) {
    out.push_back(builtin_graph(name, analysis_channels()));
    out.push_back(builtin_graph(name, desk_channels(8)));
  }
  const std::vector<int> rates{1, 2, 5};
  out.push_back(build_serial(rates, 4));
  out.push_back(build_denseaspp(rates, 8, 4));
  return out;
}

}  // namespace

TEST_CASE("aspp builder") {
  const std::vector<int> rates{1, 12, 24, 36};
  const GraphSpec g = build_aspp(rates, 2048, 256);
  CHECK(count_kind(g, NodeKind::kAtrous3x3) == 4);
  CHECK(count_kind(g, NodeKind::kConcatMerge) == 1);
  CHECK(validate(g).ok());

  const std::vector<int> single{5};
  const GraphSpec one = build_aspp(single, 4, 4);
  CHECK(count_kind(one, NodeKind::kAtrous3x3) == 1);
  CHECK(validate(one).ok());

  Warnings w;
  const std::vector<int> dup{3, 3};
  build_aspp(dup, 4, 4, &w);
  CHECK(!w.empty());
  CHECK_THROWS_AS(build_aspp(std::vector<int>{}, 4, 4), ConfigError);
  CHECK_THROWS_AS(build_aspp(std::vector<int>{0}, 4, 4), ConfigError);
}

TEST_CASE("aspp builder validates for random rate lists") {
  oracle::Gen gen(41);
  for (int i = 0; i < 50; ++i) {
    std::vector<int> rates;
    const int b = gen.integer(1, 6);
    for (int j = 0; j < b; ++j) rates.push_back(gen.integer(1, 40));
    CHECK(validate(build_aspp(rates, 16, 8)).ok());
  }
}

TEST_CASE("denseaspp builder") {
  const std::vector<int> rates{1, 12, 24, 36};
  const GraphSpec g = build_denseaspp(rates, 2048, 256, 512);
  CHECK(count_kind(g, NodeKind::kAtrous3x3) == 4);
  CHECK(validate(g).ok());
  CHECK(longest_dilation_path(g) == 73);

  Warnings w;
  const std::vector<int> unsorted{24, 1, 12};
  const GraphSpec s = build_denseaspp(unsorted, 8, 4, 0, &w);
  CHECK(!w.empty());
  std::vector<int> order;
  for (const NodeSpec& n : s.nodes) {
    if (n.kind == NodeKind::kAtrous3x3) order.push_back(n.dilation);
  }
  CHECK(order == std::vector<int>{1, 12, 24});

  const std::vector<int> single{7};
  CHECK(longest_dilation_path(build_denseaspp(single, 4, 4)) == 7);
}

TEST_CASE("supernet builder") {
  const auto untuned = untuned_grid();
  const GraphSpec g = build_supernet(untuned, 2048, 256, 256, true);
  CHECK(validate(g).ok());
  CHECK(longest_dilation_path(g) == 109);
  CHECK(count_kind(g, NodeKind::kGateMerge) == 6);
  CHECK(g.gates.size() == 6);

  const auto tuned = tuned_grid();
  CHECK(tuned.size() == 4);
  CHECK(tuned[3].first == 33);
  CHECK(tuned[3].second == 37);
  CHECK(longest_dilation_path(build_supernet(tuned, 16, 8, 8, false)) == 105);

  const std::vector<DilationPair> one{{1, 1}};
  const GraphSpec plain = build_supernet(one, 8, 4, 4, false);
  CHECK(validate(plain).ok());
  CHECK(count_kind(plain, NodeKind::kAtrous3x3) == 2);
  CHECK(count_kind(plain, NodeKind::kSumMerge) + count_kind(plain, NodeKind::kGateMerge) == 0);
  CHECK_THROWS_AS(build_supernet(std::vector<DilationPair>{}, 8, 4, 4, true), ConfigError);
}

TEST_CASE("gated and ungated supernets differ only in merge kinds") {
  oracle::Gen gen(43);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<DilationPair> grid;
    const int b = gen.integer(1, 5);
    for (int i = 0; i < b; ++i) grid.push_back({gen.integer(1, 9), gen.integer(1, 9)});
    GraphSpec gated = build_supernet(grid, 8, 4, 4, true);
    GraphSpec plain = build_supernet(grid, 8, 4, 4, false);
    CHECK(gated.edges == plain.edges);
    REQUIRE(gated.nodes.size() == plain.nodes.size());
    for (std::size_t i = 0; i < gated.nodes.size(); ++i) {
      NodeSpec a = gated.nodes[i];
      const NodeSpec& p = plain.nodes[i];
      if (a.kind == NodeKind::kGateMerge) {
        CHECK(p.kind == NodeKind::kSumMerge);
        a.kind = NodeKind::kSumMerge;
      }
      CHECK(a == p);
    }
    CHECK(plain.gates.empty());
    CHECK(static_cast<int>(gated.gates.size()) == 2 * (b - 1));
  }
}

TEST_CASE("every canonical builder output validates and round-trips") {
  for (const GraphSpec& g : canonical_graphs()) {
    CAPTURE(g.name);
    CHECK(validate(g).ok());
    const std::string bytes = serialize(g);
    const GraphSpec back = parse_graph(bytes);
    CHECK(back == g);
    CHECK(serialize(back) == bytes);
  }
}

TEST_CASE("parse errors carry a location") {
  CHECK_THROWS_AS(parse_graph("{"), ParseError);
  const std::string bad_kind = R"({"format":"gpsnet-graph","version":1,"name":"x","edges":[],"gates":[],
    "nodes":[{"id":"a","kind":"blob","branch":0,"layer":0}]})";
  try {
    parse_graph(bad_kind);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("nodes[0].kind") != std::string::npos);
  }
  const std::string bad_edge = R"({"format":"gpsnet-graph","version":1,"name":"x","gates":[],
    "nodes":[],"edges":[{"from":"a","to":"b","role":"diagonal"}]})";
  try {
    parse_graph(bad_edge);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("edges[0]") != std::string::npos);
  }
}

TEST_CASE("empty node list fails validation") {
  const GraphSpec g = parse_graph(
      R"({"format":"gpsnet-graph","version":1,"name":"empty","nodes":[],"edges":[],"gates":[]})");
  CHECK(!validate(g).ok());
  CHECK_THROWS_AS(require_valid(g), ValidationError);
}

TEST_CASE("validator detects cycles and gate arity") {
  GraphSpec g = build_serial(std::vector<int>{1, 2}, 4);
  g.edges.push_back({"l2.conv", "l1.conv", EdgeRole::kHorizontal});
  CHECK(validate(g).has("cycle"));
  CHECK_THROWS_AS(topological_order(g), ValidationError);

  GraphSpec gated = build_supernet(std::vector<DilationPair>{{1, 1}, {2, 2}}, 8, 4, 4, true);
  const std::string merge = gated.gates.front().merge;
  const std::string vertical = gated.gates.front().vertical;
  std::erase_if(gated.edges, [&](const EdgeSpec& e) { return e.to == merge && e.from == vertical; });
  CHECK(validate(gated).has("gate arity"));
}

TEST_CASE("validator detects channel mismatches and unreachable nodes") {
  GraphSpec g = build_serial(std::vector<int>{1, 2}, 4);
  for (NodeSpec& n : g.nodes) {
    if (n.id == "l2.conv") n.in_ch = 5;
  }
  CHECK(validate(g).has("channels"));

  GraphSpec orphan = build_serial(std::vector<int>{1}, 4);
  orphan.nodes.push_back({"loose", NodeKind::kAtrous3x3, 3, 2, 4, 4, 0, 0});
  CHECK(!validate(orphan).ok());
}

TEST_CASE("topological order is deterministic and respects edges") {
  oracle::Gen gen(47);
  for (int t = 0; t < 30; ++t) {
    const GraphSpec g = oracle::random_dag(gen, 2, 8, 4);
    REQUIRE(validate(g).ok());
    const auto order = topological_order(g);
    CHECK(order == topological_order(g));
    std::map<std::string, std::size_t> pos;
    for (std::size_t i = 0; i < order.size(); ++i) pos[order[i]] = i;
    for (const EdgeSpec& e : g.edges) CHECK(pos[e.from] < pos[e.to]);
    // Reversing the declaration order does not change the result.
    GraphSpec reversed = g;
    std::reverse(reversed.nodes.begin(), reversed.nodes.end());
    CHECK(topological_order(reversed) == order);
  }
}
