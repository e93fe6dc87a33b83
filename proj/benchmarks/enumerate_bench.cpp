#include <benchmark/benchmark.h>

#include "gpsnet/builtins.hpp"
#include "gpsnet/report.hpp"
#include "gpsnet/rf_analysis.hpp"

using namespace gpsnet;

static void BM_EnumerateBuiltin(benchmark::State& state, const char* name) {
  const GraphSpec g = builtin_graph(name, analysis_channels());
  for (auto _ : state) {
    SampleEnumeration e = enumerate_samples(g);
    benchmark::DoNotOptimize(e.branch_union.size());
  }
}
BENCHMARK_CAPTURE(BM_EnumerateBuiltin, aspp, "aspp");
BENCHMARK_CAPTURE(BM_EnumerateBuiltin, denseaspp, "denseaspp");
BENCHMARK_CAPTURE(BM_EnumerateBuiltin, gps_untuned, "gps-untuned");
BENCHMARK_CAPTURE(BM_EnumerateBuiltin, gps_tuned, "gps-tuned");

static void BM_AnalysisReport(benchmark::State& state) {
  std::vector<AnalysisTarget> targets;
  for (const std::string& name : builtin_names()) targets.push_back(builtin_target(name));
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_json(analysis_report(targets)));
  }
}
BENCHMARK(BM_AnalysisReport)->Unit(benchmark::kMillisecond);

static void BM_SerialClosedForm(benchmark::State& state) {
  std::vector<SerialLayer> chain;
  for (int i = 1; i <= state.range(0); ++i) chain.push_back({3, i});
  for (auto _ : state) {
    benchmark::DoNotOptimize(rf_sr_serial(chain).sample_count);
  }
}
BENCHMARK(BM_SerialClosedForm)->Arg(2)->Arg(8)->Arg(32);
