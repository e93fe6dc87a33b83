#include "gpsnet/report.hpp"

#include <cmath>

#include <fmt/format.h>
#include <json.hpp>

#include "gpsnet/builtins.hpp"
#include "gpsnet/errors.hpp"

namespace gpsnet {
namespace {

using nlohmann::json;

const std::vector<int> kPyramid{1, 12, 24, 36};

std::string grid_text(const std::vector<DilationPair>& grid) {
  std::string s = "{";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    s += fmt::format("{}({},{})", i == 0 ? "" : ",", grid[i].first,
                     grid[i].second);
  }
  return s + "}";
}

std::string format_params(std::size_t params) {
  return fmt::format("{:.2f}M", static_cast<double>(params) / 1e6);
}

json optional_json(const auto& v) {
  if (v) return json(*v);
  return json(nullptr);
}

}  // namespace

std::optional<int> ReportRow::closed_form_rf_delta() const {
  if (!closed_form_rf_side) return std::nullopt;
  return enumerated.rf_side - *closed_form_rf_side;
}

std::optional<long long> ReportRow::closed_form_count_delta() const {
  if (!closed_form_count) return std::nullopt;
  return static_cast<long long>(enumerated.sample_count) -
         static_cast<long long>(*closed_form_count);
}

AnalysisTarget builtin_target(std::string_view name) {
  AnalysisTarget t;
  t.graph = builtin_graph(name, analysis_channels());
  t.method = std::string(name);
  if (name == "aspp") {
    t.method = "ASPP";
    t.kind = MethodKind::kAspp;
    t.rates = kPyramid;
    t.dilation_setting = "{1,12,24,36}";
    t.reference = ReferenceValues{73, 0.006, 18.9};
  } else if (name == "denseaspp") {
    t.method = "DenseASPP";
    t.kind = MethodKind::kDenseAspp;
    t.rates = kPyramid;
    t.dilation_setting = "{1,12,24,36}";
    t.reference = ReferenceValues{147, 0.070, 25.6};
  } else {
    t.kind = MethodKind::kSuperNet;
    const bool tuned = !name.ends_with("untuned");
    t.dilation_setting = grid_text(tuned ? tuned_grid() : untuned_grid());
    if (name == "supernet-untuned") {
      t.method = "SuperNet";
      t.reference = ReferenceValues{219, 0.125, 6.29};
    } else if (name == "gps-untuned") {
      t.method = "Untuned GPS";
      t.reference = ReferenceValues{219, 0.125, 6.3};
    } else if (name == "gps-tuned") {
      t.method = "Tuned GPS";
      t.reference = ReferenceValues{199, 0.843, 6.3};
    } else {
      t.method = "Tuned SuperNet";
    }
  }
  return t;
}

AnalysisTarget generic_target(GraphSpec graph) {
  AnalysisTarget t;
  t.method = graph.name.empty() ? "custom" : graph.name;
  t.dilation_setting = "-";
  t.graph = std::move(graph);
  return t;
}

ReportRow analyze(const AnalysisTarget& target) {
  const SampleEnumeration samples = enumerate_samples(target.graph);
  ReportRow row;
  row.method = target.method;
  row.dilation_setting = target.dilation_setting;
  row.enumerated = rf_sr_gps(samples, target.method);
  const RfSrResult exit = rf_sr_of_set(samples.exit_union, target.method);
  row.exit_sample_count = exit.sample_count;
  row.exit_sr = static_cast<double>(exit.sample_count) /
                static_cast<double>(row.enumerated.rf_area);
  for (const auto& [b, set] : samples.branches) {
    row.branches.push_back(BranchStat{b, set.side(), set.size()});
  }

  switch (target.kind) {
    case MethodKind::kAspp: {
      const RfSrResult cf = rf_sr_aspp(3, target.rates);
      row.closed_form_rf_side = cf.rf_side;
      if (cf.closed_form_valid) row.closed_form_count = cf.sample_count;
      row.notes.insert(row.notes.end(), cf.notes.begin(), cf.notes.end());
      break;
    }
    case MethodKind::kAtrous:
    case MethodKind::kSerial: {
      const RfSrResult cf = rf_sr_serial(target.chain);
      row.closed_form_rf_side = cf.rf_side;
      row.closed_form_count = cf.sample_count;
      break;
    }
    case MethodKind::kDenseAspp: {
      int side = 1;
      for (int r : target.rates) side += 2 * r;
      row.closed_form_rf_side = side;
      break;
    }
    case MethodKind::kSuperNet:
    case MethodKind::kGeneric:
      row.closed_form_rf_side = 2 * longest_dilation_path(target.graph) + 1;
      break;
  }

  row.params = count_params(target.graph, target.param_options).total;
  row.enumerated.params = row.params;
  row.reference = target.reference;
  if (target.reference && row.enumerated.rf_side != target.reference->rf_side) {
    row.notes.push_back(fmt::format(
        "RF {} differs from reference {} (delta {:+d})", row.enumerated.rf_side,
        target.reference->rf_side,
        row.enumerated.rf_side - target.reference->rf_side));
  }
  return row;
}

AnalysisReport analysis_report(std::span<const AnalysisTarget> targets) {
  AnalysisReport report;
  for (const AnalysisTarget& t : targets) report.rows.push_back(analyze(t));
  return report;
}

std::string render_text(const AnalysisReport& report) {
  std::string out;
  out += fmt::format("{:<16} {:<36} {:>5} {:>7} {:>7} {:>7} {:>9} {:>7} {:>8}\n",
                     "method", "dilations", "RF", "RF^2", "samples", "SR",
                     "params", "cf_dRF", "cf_dcnt");
  for (const ReportRow& r : report.rows) {
    const auto drf = r.closed_form_rf_delta();
    const auto dcnt = r.closed_form_count_delta();
    out += fmt::format(
        "{:<16} {:<36} {:>5} {:>7} {:>7} {:>7.4f} {:>9} {:>7} {:>8}\n",
        r.method, r.dilation_setting, r.enumerated.rf_side,
        r.enumerated.rf_area, r.enumerated.sample_count, r.enumerated.sr,
        format_params(r.params), drf ? fmt::format("{:+d}", *drf) : "n/a",
        dcnt ? fmt::format("{:+d}", *dcnt) : "n/a");
  }
  bool any_reference = false;
  for (const ReportRow& r : report.rows) any_reference |= r.reference.has_value();
  if (any_reference) {
    out += "\nreference comparison\n";
    out += fmt::format("{:<16} {:>6} {:>6} {:>8} {:>8} {:>8} {:>9} {:>9}\n",
                       "method", "RF", "ref_RF", "dRF", "SR", "ref_SR", "dSR",
                       "ref_par");
    for (const ReportRow& r : report.rows) {
      if (!r.reference) continue;
      const ReferenceValues& ref = *r.reference;
      out += fmt::format(
          "{:<16} {:>6} {:>6} {:>+8d} {:>8.4f} {:>8.3f} {:>+9.4f} {:>8.2f}M\n",
          r.method, r.enumerated.rf_side, ref.rf_side,
          r.enumerated.rf_side - ref.rf_side, r.enumerated.sr, ref.sr,
          r.enumerated.sr - ref.sr, ref.params_millions);
    }
  }
  bool header = false;
  for (const ReportRow& r : report.rows) {
    for (const std::string& n : r.notes) {
      if (!header) {
        out += "\nnotes\n";
        header = true;
      }
      out += fmt::format("- {}: {}\n", r.method, n);
    }
  }
  return out;
}

std::string render_json(const AnalysisReport& report) {
  json rows = json::array();
  for (const ReportRow& r : report.rows) {
    json branches = json::array();
    for (const BranchStat& b : r.branches) {
      branches.push_back({{"branch", b.branch},
                          {"rf_side", b.rf_side},
                          {"sample_count", b.sample_count}});
    }
    json reference(nullptr);
    if (r.reference) {
      reference = {{"rf_side", r.reference->rf_side},
                   {"sr", r.reference->sr},
                   {"params_millions", r.reference->params_millions},
                   {"rf_side_delta", r.enumerated.rf_side - r.reference->rf_side},
                   {"sr_delta", r.enumerated.sr - r.reference->sr}};
    }
    rows.push_back({
        {"method", r.method},
        {"dilations", r.dilation_setting},
        {"rf_side", r.enumerated.rf_side},
        {"rf_area", r.enumerated.rf_area},
        {"sample_count", r.enumerated.sample_count},
        {"sr", r.enumerated.sr},
        {"exit_sample_count", r.exit_sample_count},
        {"exit_sr", r.exit_sr},
        {"params", r.params},
        {"branches", branches},
        {"closed_form",
         {{"rf_side", optional_json(r.closed_form_rf_side)},
          {"sample_count", optional_json(r.closed_form_count)}}},
        {"closed_form_delta",
         {{"rf_side", optional_json(r.closed_form_rf_delta())},
          {"sample_count", optional_json(r.closed_form_count_delta())}}},
        {"reference", reference},
        {"notes", r.notes},
    });
  }
  json root = {{"rows", rows}};
  return root.dump(2) + "\n";
}

}  // namespace gpsnet
