// One line per acceptance criterion: "PASS criterion N: ..." or "FAIL ...".
// Exit status is the number of failed criteria (capped at 1).

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "gpsnet/builtins.hpp"
#include "gpsnet/gpsnet.hpp"
#include "gpsnet/gradcheck.hpp"
#include "gpsnet/graph_io.hpp"
#include "gpsnet/report.hpp"
#include "gpsnet/rf_analysis.hpp"
#include "gpsnet/training.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace gpsnet;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---- reference numbers ---------------------------------------------------

Outcome criterion1() {
  const ReportRow r = analyze(builtin_target("aspp"));
  const double sr = r.enumerated.sr;
  const bool ok = r.enumerated.rf_side == 73 && std::abs(sr - 0.006) <= 0.0005 &&
                  r.enumerated.sample_count == 33 && r.params == 18874368;
  return {ok, fmt::format("ASPP rf_side {} SR {:.5f} (33/5329 = {:.5f}) params {}",
                          r.enumerated.rf_side, sr, 33.0 / 5329.0, r.params)};
}

Outcome criterion2() {
  const GraphSpec g = builtin_graph("denseaspp", analysis_channels());
  const ReportRow r = analyze(builtin_target("denseaspp"));
  const int path = longest_dilation_path(g);
  const bool ok = r.enumerated.rf_side == 147 && path == 73 &&
                  std::abs(r.enumerated.sr - 0.070) <= 0.002;
  return {ok, fmt::format("DenseASPP rf_side {} longest path {} SR {:.4f}",
                          r.enumerated.rf_side, path, r.enumerated.sr)};
}

Outcome criterion3() {
  const auto t0 = Clock::now();
  const ReportRow gps = analyze(builtin_target("gps-untuned"));
  const double elapsed = seconds_since(t0);
  const ReportRow super = analyze(builtin_target("supernet-untuned"));
  const bool ok = gps.enumerated.rf_side == 219 && super.enumerated.rf_side == 219 &&
                  std::abs(gps.enumerated.sr - 0.125) <= 0.005 &&
                  gps.enumerated.sample_count == super.enumerated.sample_count &&
                  elapsed < 60.0;
  return {ok, fmt::format("Untuned GPS rf_side {} SR {:.4f} (SuperNet {} / {:.4f}) in {:.2f} s",
                          gps.enumerated.rf_side, gps.enumerated.sr, super.enumerated.rf_side,
                          super.enumerated.sr, elapsed)};
}

Outcome criterion4() {
  const ReportRow untuned = analyze(builtin_target("gps-untuned"));
  const ReportRow tuned = analyze(builtin_target("gps-tuned"));
  const AnalysisTarget target = builtin_target("gps-tuned");
  const std::string text = render_text(analysis_report(std::span(&target, 1)));
  const bool a = tuned.enumerated.sr > untuned.enumerated.sr;
  const bool b = tuned.enumerated.rf_side >= 165 && tuned.enumerated.rf_side <= 301;
  const std::string drf = fmt::format("{:+d}", tuned.enumerated.rf_side - 199);
  const std::string dsr = fmt::format("{:+.4f}", tuned.enumerated.sr - 0.843);
  const bool c = text.find("199") != std::string::npos && text.find("0.843") != std::string::npos &&
                 text.find(drf) != std::string::npos && text.find(dsr) != std::string::npos;
  return {a && b && c,
          fmt::format("Tuned GPS SR {:.4f} > untuned {:.4f}: {}; rf_side {} in [165, 301]: {}; "
                      "report shows delta {} / {} against (199, 0.843): {}",
                      tuned.enumerated.sr, untuned.enumerated.sr, a, tuned.enumerated.rf_side, b,
                      drf, dsr, c)};
}

Outcome criterion5() {
  const ChannelConfig ch = analysis_channels();
  const ParamCountOptions opts{false, false};
  auto count = [&](std::string_view name) {
    return count_params(builtin_graph(name, ch), opts);
  };
  const ParamCount aspp = count("aspp");
  const ParamCount dense = count("denseaspp");
  const ParamCount super = count("supernet-untuned");
  const ParamCount gps = count("gps-untuned");
  const double overhead = static_cast<double>(gps.gates) / static_cast<double>(super.total);
  const bool ok = super.total < dense.total && dense.total < aspp.total && overhead < 0.01 &&
                  gps.total - super.total == gps.gates;
  return {ok, fmt::format("SuperNet {} < DenseASPP {} < ASPP {}; gate overhead {:.4f}%",
                          super.total, dense.total, aspp.total, 100.0 * overhead)};
}

// ---- properties ----------------------------------------------------------

Outcome criterion6() {
  oracle::Gen gen(6006);
  int bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> rates;
    std::vector<SerialLayer> chain;
    for (int i = gen.integer(1, 3); i > 0; --i) {
      rates.push_back(gen.integer(1, 8));
      chain.push_back({3, rates.back()});
    }
    const RfSrResult closed = rf_sr_serial(chain);
    const oracle::PointSet brute = oracle::exit_union(build_serial(rates, 1));
    if (closed.rf_side != oracle::side_of(brute) || closed.sample_count != brute.size()) ++bad;
  }
  for (int trial = 0; trial < 50; ++trial) {
    const std::vector<int> rates = gen.distinct_rates(gen.integer(1, 6), 40);
    const RfSrResult closed = rf_sr_aspp(3, rates);
    const oracle::PointSet brute = oracle::exit_union(build_aspp(rates, 1, 1));
    if (closed.rf_side != oracle::side_of(brute) || closed.sample_count != brute.size()) ++bad;
  }
  return {bad == 0, fmt::format("100 serial chains + 50 distinct-rate ASPPs, {} mismatches", bad)};
}

Outcome criterion7() {
  oracle::Gen gen(7007);
  int bad = 0;
  int max_side = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const GraphSpec g = oracle::random_dag(gen, 2, 5, 3);
    const SampleEnumeration e = enumerate_samples(g);
    max_side = std::max(max_side, e.exit_union.side());
    if (oracle::impulse_support(g) != oracle::to_points(e.exit_union)) ++bad;
  }
  return {bad == 0 && max_side <= 31,
          fmt::format("10 random graphs (largest rf_side {}), {} support mismatches", max_side, bad)};
}

Outcome criterion8() {
  double gate_err = 0.0;
  double model_err = 0.0;
  bool ok = true;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    GateModule g = GateModule::make(4);
    std::mt19937_64 rng(seed);
    init_block(g.proj_v, rng);
    init_block(g.proj_h, rng);
    init_block(g.cmp, rng);
    GradcheckOptions opts;
    opts.seed = seed;
    const GradcheckReport gr = gradcheck_gate(g, random_tensor(Shape4{1, 4, 9, 9}, seed + 1),
                                              random_tensor(Shape4{1, 4, 9, 9}, seed + 2), opts);
    const std::vector<DilationPair> grid{{1, 2}, {2, 3}};
    SuperNetModel m = SuperNetModel::create(build_supernet(grid, 4, 8, 8, true), 8, seed);
    const GradcheckReport mr = gradcheck_model(m, random_tensor(Shape4{1, 4, 9, 9}, seed + 3), opts);
    gate_err = std::max(gate_err, gr.max_rel_error);
    model_err = std::max(model_err, mr.max_rel_error);
    ok = ok && gr.checked > 0 && mr.checked > 0;
  }
  ok = ok && gate_err < 1e-4 && model_err < 1e-4;
  return {ok, fmt::format("max rel error gate {:.3e}, 2-branch gated SuperNet {:.3e} (tol 1e-4)",
                          gate_err, model_err)};
}

Outcome criterion9() {
  oracle::Gen gen(9009);
  double worst = 0.0;
  double min_mask = 1.0;
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t c = static_cast<std::size_t>(gen.integer(1, 6));
    GateModule g = GateModule::make(c);
    std::mt19937_64 rng(gen.raw());
    init_block(g.proj_v, rng);
    init_block(g.proj_h, rng);
    init_block(g.cmp, rng);
    const Shape4 s{2, c, 5, 5};
    const Tensor4 xv = gen.tensor(s, -2, 2);
    const Tensor4 xh = gen.tensor(s, -2, 2);
    Tape tape;
    const GateOutput out = gate_forward(tape, g, tape.constant(xv), tape.constant(xh), ForwardContext{});
    const Tensor4& o = tape.value(out.out);
    const Tensor4& mv = tape.value(out.mask_v);
    const Tensor4& mh = tape.value(out.mask_h);
    for (double v : mv.data()) min_mask = std::min(min_mask, v);
    for (double v : mh.data()) min_mask = std::min(min_mask, v);
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t ch = 0; ch < s.c; ++ch)
        for (std::size_t y = 0; y < s.h; ++y)
          for (std::size_t x = 0; x < s.w; ++x) {
            const double expect = mv.at(n, 0, y, x) * xv.at(n, ch, y, x) + mh.at(n, 0, y, x) * xh.at(n, ch, y, x);
            worst = std::max(worst, std::abs(o.at(n, ch, y, x) - expect));
          }
  }

  const std::vector<DilationPair> grid{{1, 3}, {2, 2}, {3, 1}, {1, 2}};
  SuperNetModel gated = SuperNetModel::create(build_supernet(grid, 6, 5, 4, true), 6, 1);
  SuperNetModel plain = SuperNetModel::create(build_supernet(grid, 6, 5, 4, false), 6, 1);
  gated.convs = plain.convs;
  gated.fuse = plain.fuse;
  for (auto& [id, g] : gated.gates) force_gate_masks(g, 1.0, 1.0);
  const Tensor4 x = gen.tensor(Shape4{2, 6, 11, 11});
  const ForwardContext ctx{BnMode::kTrain, false};
  Tape t1, t2;
  const Tensor4& a = t1.value(supernet_forward(t1, gated, t1.constant(x), ctx).features);
  const Tensor4& b = t2.value(supernet_forward(t2, plain, t2.constant(x), ctx).features);
  std::size_t differing = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) differing += a[i] != b[i];

  const bool ok = worst <= 1e-12 && min_mask >= 0.0 && differing == 0;
  return {ok, fmt::format("recompute error {:.2e} (tol 1e-12), min mask {:.3g}, "
                          "unit-gate vs sum-merge differing values {}",
                          worst, min_mask, differing)};
}

Outcome criterion10() {
  oracle::Gen gen(10010);
  int bad = 0;
  int short_count = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t side = static_cast<std::size_t>(gen.integer(1, 12));
    const std::size_t n = side * side;
    Tensor4 p(Shape4{1, 1, side, side});
    std::vector<double> probs(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      probs[i] = gen.coin(0.3) ? gen.integer(0, 10) / 10.0 : gen.real(0.0, 1.0);
      p[i] = probs[i];
      labels[i] = gen.coin(0.15) ? kIgnoreLabel : gen.integer(0, 4);
    }
    const double thr = gen.real(0.0, 1.0);
    const auto keep = static_cast<std::size_t>(gen.integer(0, static_cast<int>(n) + 20));
    const OhemSelection s = ohem_select(p, labels, kIgnoreLabel, thr, keep);
    if (s.selected != oracle::brute_ohem(probs, labels, kIgnoreLabel, thr, keep)) ++bad;
    if (s.selected.size() < std::min(keep, s.labeled)) ++short_count;
  }
  return {bad == 0 && short_count == 0,
          fmt::format("500 random inputs, {} oracle mismatches, {} below min(min_keep, labeled)",
                      bad, short_count)};
}

// Pinned toy-training configuration.
TrainConfig toy_config() {
  TrainConfig cfg;
  cfg.graph = "gps-tuned";
  cfg.squeeze_channels = 64;
  cfg.max_iter = 600;
  cfg.eval_interval = 100;
  cfg.ohem_min_keep = 256;
  cfg.seed = 0;
  return cfg;
}

Outcome criterion11() {
  const TrainConfig cfg = toy_config();
  const ToyData data = make_datasets(cfg);
  SegmentationNet net = SegmentationNet::create(cfg);
  const auto t0 = Clock::now();
  const TrainResult r = train_toy(net, cfg, data.train, data.test);
  const double elapsed = seconds_since(t0);
  std::vector<double> windows;
  for (std::size_t i = 0; i + 100 <= r.history.size(); i += 100) {
    double s = 0.0;
    for (std::size_t j = i; j < i + 100; ++j) s += r.history[j].loss;
    windows.push_back(s / 100.0);
  }
  bool decreasing = windows.size() >= 2;
  for (std::size_t i = 1; i < windows.size(); ++i) decreasing = decreasing && windows[i] < windows[i - 1];
  std::string trail;
  for (double w : windows) trail += fmt::format("{}{:.4f}", trail.empty() ? "" : " > ", w);
  const bool ok = cfg.max_iter <= 2000 && r.final_test_miou >= 0.9 && decreasing &&
                  elapsed < 1800.0;
  return {ok, fmt::format("tuned GPS c={} crop {} {} iters: held-out mIoU {:.4f} (>= 0.9), "
                          "100-iter loss means {} ({}), {:.0f} s",
                          cfg.squeeze_channels, cfg.crop, cfg.max_iter, r.final_test_miou, trail,
                          decreasing ? "strictly decreasing" : "NOT decreasing", elapsed)};
}

// ---- CLI determinism -----------------------------------------------------

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Every regular file under `dir`, keyed by relative path.
std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path());
  }
  return out;
}

Outcome criterion12() {
#ifndef GPSNET_CLI_PATH
  return {false, "CLI not built"};
#else
  const fs::path root = fs::temp_directory_path() / fmt::format("gpsnet_accept_{}", ::getpid());
  fs::remove_all(root);
  fs::create_directories(root);
  {
    std::ofstream cfg(root / "toy.json");
    cfg << R"({"graph": "gps-untuned", "max_iter": 4, "eval_interval": 2, "crop": 12,
               "stem_channels": 4, "squeeze_channels": 4, "branch_out_channels": 4,
               "head_channels": 4, "train_images": 4, "test_images": 2, "ohem_min_keep": 16})";
  }
  struct Command {
    std::string name;
    std::string args;  // {out} is replaced by the run's output directory
  };
  const std::vector<Command> commands{
      {"analyze", "analyze --format json --out {out}"},
      {"render-samples", "render-samples --builtin gps-tuned --out {out}"},
      {"forward", "forward --builtin gps-untuned --seed 3 --shape 1,8,9,9 --out {out}"},
      {"gradcheck", "gradcheck --builtin gps-untuned --seed 1 --shape 1,4,7,7 --samples 2 --out {out}"},
      {"train-toy", fmt::format("train-toy --config {} --seed 5 --out {{out}}", (root / "toy.json").string())},
      {"gates-dump", fmt::format("gates-dump --checkpoint {} --image-index 1 --out {{out}}",
                                 (root / "train-toy.a" / "checkpoint.bin").string())},
  };
  std::vector<std::string> failures;
  for (const Command& c : commands) {
    std::map<std::string, std::string> runs[2];
    int codes[2] = {0, 0};
    for (int run = 0; run < 2; ++run) {
      const fs::path out = root / fmt::format("{}.{}", c.name, run == 0 ? "a" : "b");
      std::string args = c.args;
      args.replace(args.find("{out}"), 5, out.string());
      const fs::path stdout_file = root / fmt::format("{}.{}.stdout", c.name, run);
      const std::string cmd = fmt::format("\"{}\" {} > \"{}\" 2>/dev/null", GPSNET_CLI_PATH, args,
                                          stdout_file.string());
      codes[run] = std::system(cmd.c_str());
      runs[run] = snapshot(out);
      runs[run]["<stdout>"] = read_file(stdout_file);
    }
    if (codes[0] != 0 || codes[1] != 0) {
      failures.push_back(fmt::format("{} exited {}", c.name, codes[0]));
    } else if (runs[0] != runs[1] || runs[0].size() < 2) {
      failures.push_back(fmt::format("{} outputs differ", c.name));
    }
  }
  fs::remove_all(root);
  std::string detail = fmt::format("{} CLI commands run twice", commands.size());
  for (const std::string& f : failures) detail += "; " + f;
  if (failures.empty()) detail += ", all outputs byte-identical";
  return {failures.empty(), detail};
#endif
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{
      criterion1, criterion2, criterion3, criterion4,  criterion5,  criterion6,
      criterion7, criterion8, criterion9, criterion10, criterion11, criterion12};
  // Optional list of criterion numbers to run.
  std::vector<int> only;
  for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i + 1);
    if (!only.empty() && std::find(only.begin(), only.end(), n) == only.end()) continue;
    Outcome o;
    try {
      o = criteria[i]();
    } catch (const std::exception& e) {
      o = {false, fmt::format("exception: {}", e.what())};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << n << ": " << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
