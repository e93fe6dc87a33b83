#include <doctest.h>

#include <cmath>

#include "gpsnet/builtins.hpp"
#include "gpsnet/errors.hpp"
#include "gpsnet/gpsnet.hpp"
#include "gpsnet/graph_io.hpp"
#include "gpsnet/rf_analysis.hpp"
#include "oracles.hpp"

using namespace gpsnet;

namespace {

std::vector<DilationPair> random_grid(oracle::Gen& gen, int max_branches, int max_rate) {
  std::vector<DilationPair> grid(static_cast<std::size_t>(gen.integer(1, max_branches)));
  for (DilationPair& p : grid) p = {gen.integer(1, max_rate), gen.integer(1, max_rate)};
  return grid;
}

}  // namespace

TEST_CASE("property: enumeration equals the set oracle on random graphs") {
  oracle::Gen gen(101);
  for (int trial = 0; trial < 60; ++trial) {
    const GraphSpec g = oracle::random_dag(gen, 2, 6, 5);
    CAPTURE(serialize(g));
    const SampleEnumeration e = enumerate_samples(g);
    CHECK(oracle::to_points(e.exit_union) == oracle::exit_union(g));
  }
}

TEST_CASE("property: support side is twice the longest dilation path plus one") {
  oracle::Gen gen(103);
  for (int trial = 0; trial < 60; ++trial) {
    const GraphSpec g = oracle::random_dag(gen, 2, 6, 5);
    const SampleEnumeration e = enumerate_samples(g);
    CHECK(e.exit_union.side() == 2 * longest_dilation_path(g) + 1);
  }
}

TEST_CASE("property: sample rate lies in (0, 1]") {
  oracle::Gen gen(107);
  for (int trial = 0; trial < 60; ++trial) {
    const RfSrResult r = rf_sr_gps(build_supernet(random_grid(gen, 4, 12), 4, 4, 4, gen.coin()));
    CHECK(r.sr > 0.0);
    CHECK(r.sr <= 1.0);
    CHECK(r.sample_count <= static_cast<std::size_t>(r.rf_area));
  }
}

TEST_CASE("property: adding a branch never shrinks the support") {
  oracle::Gen gen(109);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<DilationPair> grid = random_grid(gen, 3, 10);
    const RfSrResult before = rf_sr_gps(build_supernet(grid, 4, 4, 4, true));
    grid.push_back({gen.integer(1, 10), gen.integer(1, 10)});
    const RfSrResult after = rf_sr_gps(build_supernet(grid, 4, 4, 4, true));
    CHECK(after.rf_side >= before.rf_side);
    CHECK(after.sample_count >= before.sample_count);
  }
}

TEST_CASE("property: gating never changes the sample sets") {
  oracle::Gen gen(113);
  for (int trial = 0; trial < 30; ++trial) {
    const auto grid = random_grid(gen, 4, 9);
    const SampleEnumeration a = enumerate_samples(build_supernet(grid, 4, 4, 4, true));
    const SampleEnumeration b = enumerate_samples(build_supernet(grid, 4, 4, 4, false));
    CHECK(a.branch_union == b.branch_union);
    CHECK(a.branches == b.branches);
  }
}

TEST_CASE("property: closed forms agree with enumeration for distinct rates") {
  oracle::Gen gen(127);
  for (int trial = 0; trial < 40; ++trial) {
    const std::vector<int> rates = gen.distinct_rates(gen.integer(1, 5), 30);
    const RfSrResult closed = rf_sr_aspp(3, rates);
    const RfSrResult enumerated = rf_sr_gps(build_aspp(rates, 2, 2));
    CHECK(closed.rf_side == enumerated.rf_side);
    CHECK(closed.sample_count == enumerated.sample_count);

    std::vector<SerialLayer> chain;
    std::vector<int> chain_rates;
    for (int i = gen.integer(1, 4); i > 0; --i) {
      chain_rates.push_back(gen.integer(1, 8));
      chain.push_back({3, chain_rates.back()});
    }
    const RfSrResult serial = rf_sr_serial(chain);
    const RfSrResult walk = rf_sr_gps(build_serial(chain_rates, 2));
    CHECK(serial.rf_side == walk.rf_side);
    CHECK(serial.sample_count == walk.sample_count);
  }
}

TEST_CASE("property: runtime impulse support equals the enumerated support") {
  oracle::Gen gen(131);
  for (int trial = 0; trial < 12; ++trial) {
    const GraphSpec g = oracle::random_dag(gen, 2, 5, 3);
    CAPTURE(serialize(g));
    CHECK(oracle::impulse_support(g) == oracle::exit_union(g));
  }
}

TEST_CASE("property: graph serialisation round-trips") {
  oracle::Gen gen(137);
  for (int trial = 0; trial < 40; ++trial) {
    const GraphSpec g = gen.coin() ? oracle::random_dag(gen, 3, 6, 5)
                                   : build_supernet(random_grid(gen, 4, 9), 8, 4, 6, gen.coin());
    const std::string text = serialize(g);
    CHECK(serialize(parse_graph(text)) == text);
  }
}

TEST_CASE("property: gate masks are non-negative for random parameters") {
  oracle::Gen gen(139);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t c = static_cast<std::size_t>(gen.integer(1, 5));
    GateModule g = GateModule::make(c);
    std::mt19937_64 rng(gen.raw());
    init_block(g.proj_v, rng);
    init_block(g.proj_h, rng);
    init_block(g.cmp, rng);
    for (double& v : g.cmp.bn.beta.data()) v = gen.real(-1.0, 1.0);
    Tape tape;
    const Shape4 s{1, c, 4, 4};
    const GateOutput out = gate_forward(tape, g, tape.constant(gen.tensor(s, -3, 3)),
                                        tape.constant(gen.tensor(s, -3, 3)), ForwardContext{});
    for (double v : tape.value(out.mask_v).data()) CHECK(v >= 0.0);
    for (double v : tape.value(out.mask_h).data()) CHECK(v >= 0.0);
  }
}
