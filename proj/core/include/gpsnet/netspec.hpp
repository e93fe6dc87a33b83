#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gpsnet {

enum class NodeKind {
  kEntrance,
  kSqueeze1x1,
  kAtrous3x3,
  kExcite1x1,
  kGateMerge,
  kSumMerge,
  kConcatMerge,
  kExit,
};

std::string_view to_string(NodeKind kind);
std::optional<NodeKind> parse_node_kind(std::string_view text);
bool is_conv(NodeKind kind);
bool is_merge(NodeKind kind);

enum class EdgeRole { kHorizontal, kVertical };

std::string_view to_string(EdgeRole role);
std::optional<EdgeRole> parse_edge_role(std::string_view text);

// One node of an atrous-convolution DAG. Fields that do not apply to a kind
// stay 0: kernel/in_ch only for convolutions, dilation only for atrous3x3.
// Entrances carry out_ch as the channel count of the module input.
// branch/layer are 1-based tags; 0 means "not part of a branch".
struct NodeSpec {
  std::string id;
  NodeKind kind = NodeKind::kEntrance;
  int kernel = 0;
  int dilation = 0;
  std::size_t in_ch = 0;
  std::size_t out_ch = 0;
  int branch = 0;
  int layer = 0;

  friend bool operator==(const NodeSpec&, const NodeSpec&) = default;
};

struct EdgeSpec {
  std::string from;
  std::string to;
  EdgeRole role = EdgeRole::kHorizontal;

  friend bool operator==(const EdgeSpec&, const EdgeSpec&) = default;
};

// Attaches a gate to a gate_merge node and says which input is which.
struct GateSpec {
  std::string merge;
  std::string vertical;
  std::string horizontal;

  friend bool operator==(const GateSpec&, const GateSpec&) = default;
};

struct GraphSpec {
  std::string name;
  std::vector<NodeSpec> nodes;
  std::vector<EdgeSpec> edges;
  std::vector<GateSpec> gates;

  const NodeSpec* find(std::string_view id) const;
  const NodeSpec& node(std::string_view id) const;  // throws UsageError
  // Edges into / out of `id`, in declaration order.
  std::vector<const EdgeSpec*> incoming(std::string_view id) const;
  std::vector<const EdgeSpec*> outgoing(std::string_view id) const;
  const GateSpec* gate_for(std::string_view merge_id) const;

  friend bool operator==(const GraphSpec&, const GraphSpec&) = default;
};

struct Violation {
  std::string code;  // "cycle", "gate arity", "channels", ...
  std::string message;
};

struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool has(std::string_view code) const;
  std::string summary() const;
};

ValidationResult validate(const GraphSpec& graph);
// Throws ValidationError carrying the summary when validation fails.
void require_valid(const GraphSpec& graph);

// Kahn's algorithm, ready nodes taken in ascending id order. Throws
// ValidationError on a cycle.
std::vector<std::string> topological_order(const GraphSpec& graph);

// Channel count flowing out of every node. Requires a valid graph.
std::map<std::string, std::size_t> output_channels(const GraphSpec& graph);

// Largest sum of r * (k - 1) / 2 over entrance-to-exit paths; the support of
// the graph spans 2 * result + 1 positions per axis.
int longest_dilation_path(const GraphSpec& graph);

// Builder diagnostics that do not stop construction.
using Warnings = std::vector<std::string>;

// Parallel atrous 3x3 branches from one entrance, concatenated.
GraphSpec build_aspp(std::span<const int> dilations, std::size_t in_ch,
                     std::size_t branch_ch, Warnings* warnings = nullptr);

// Cascade of atrous 3x3 layers in ascending dilation order. Layer l reads the
// concat of the entrance and every earlier layer; the exit concatenates the
// entrance and all layers. bottleneck_ch > 0 inserts a 1x1 reduction in
// front of every atrous layer.
GraphSpec build_denseaspp(std::span<const int> dilations, std::size_t in_ch,
                          std::size_t growth_ch, std::size_t bottleneck_ch = 0,
                          Warnings* warnings = nullptr);

struct DilationPair {
  int first = 1;
  int second = 1;
};

// Grid of bottlenecked branches (squeeze, two atrous 3x3, excite). The input
// of conv (b, l) merges the horizontal input (previous conv of branch b, or
// its squeeze) with the vertical input (conv (b-1, l)) for b > 1. Merges are
// gate_merge when `gated`, sum_merge otherwise. Excitations are concatenated.
GraphSpec build_supernet(std::span<const DilationPair> grid, std::size_t in_ch,
                         std::size_t bottleneck_ch, std::size_t out_ch,
                         bool gated);

// Plain chain of atrous 3x3 convolutions.
GraphSpec build_serial(std::span<const int> dilations, std::size_t channels);

// Dilation grids used in the model-analysis comparison.
std::vector<DilationPair> untuned_grid();
std::vector<DilationPair> tuned_grid();

}  // namespace gpsnet
