#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gpsnet/gpsnet.hpp"
#include "gpsnet/netspec.hpp"
#include "gpsnet/rf_analysis.hpp"

namespace gpsnet {

// Which closed form applies to a target.
enum class MethodKind { kAtrous, kAspp, kSerial, kDenseAspp, kSuperNet, kGeneric };

// Published values a row is compared against.
struct ReferenceValues {
  int rf_side = 0;
  double sr = 0.0;
  double params_millions = 0.0;
};

struct AnalysisTarget {
  std::string method;
  std::string dilation_setting;
  GraphSpec graph;
  MethodKind kind = MethodKind::kGeneric;
  std::vector<int> rates;             // kAspp
  std::vector<SerialLayer> chain;     // kAtrous, kSerial
  ParamCountOptions param_options{false, false};
  std::optional<ReferenceValues> reference;
};

struct BranchStat {
  int branch = 0;
  int rf_side = 0;
  std::size_t sample_count = 0;
};

struct ReportRow {
  std::string method;
  std::string dilation_setting;
  RfSrResult enumerated;  // RF = max branch side, count = |∪ P_b|
  std::size_t exit_sample_count = 0;
  double exit_sr = 0.0;
  std::vector<BranchStat> branches;
  std::optional<int> closed_form_rf_side;
  std::optional<std::size_t> closed_form_count;
  std::size_t params = 0;
  std::optional<ReferenceValues> reference;
  std::vector<std::string> notes;

  std::optional<int> closed_form_rf_delta() const;
  std::optional<long long> closed_form_count_delta() const;
};

struct AnalysisReport {
  std::vector<ReportRow> rows;
};

// Target for a builtin graph name at analysis channel widths, with its
// published comparison values where they exist.
AnalysisTarget builtin_target(std::string_view name);
// Target for an arbitrary graph (no closed form beyond the path bound).
AnalysisTarget generic_target(GraphSpec graph);

ReportRow analyze(const AnalysisTarget& target);
AnalysisReport analysis_report(std::span<const AnalysisTarget> targets);

std::string render_text(const AnalysisReport& report);
std::string render_json(const AnalysisReport& report);

}  // namespace gpsnet
