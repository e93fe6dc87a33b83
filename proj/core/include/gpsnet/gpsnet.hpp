#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gpsnet/netspec.hpp"
#include "gpsnet/ops.hpp"
#include "gpsnet/tape.hpp"

namespace gpsnet {

struct ForwardContext {
  BnMode mode = BnMode::kTrain;
  bool update_stats = true;
};

// Convolution followed by batch norm and ReLU.
struct ConvBnBlock {
  ConvParams conv;
  BatchNormParams bn;

  static ConvBnBlock make(std::size_t in_ch, std::size_t out_ch, int kernel,
                          int dilation = 1);
};

Var conv_bn_relu(Tape& tape, ConvBnBlock& block, Var x,
                 const ForwardContext& ctx);

// He-normal weights, zero biases, identity batch norm.
void init_block(ConvBnBlock& block, std::mt19937_64& rng);

// Name and location of a trainable tensor or a running statistic.
struct NamedTensor {
  std::string name;
  Tensor4* tensor;
};

struct NamedBuffer {
  std::string name;
  std::vector<double>* values;
};

void collect_parameters(const std::string& prefix, ConvBnBlock& block,
                        std::vector<NamedTensor>& out);
void collect_buffers(const std::string& prefix, ConvBnBlock& block,
                     std::vector<NamedBuffer>& out);

// Gate prediction: two projections (C -> 1) give per-pixel masks for the
// vertical and horizontal inputs, a comparison (2 -> 2) over their concat
// gives the final pair of masks, and the output is the mask-weighted sum.
struct GateModule {
  ConvBnBlock proj_v;
  ConvBnBlock proj_h;
  ConvBnBlock cmp;

  static GateModule make(std::size_t channels);
  std::size_t channels() const { return proj_v.conv.in_channels(); }
};

struct GateOutput {
  Var out;
  Var mask_v;  // (n, 1, h, w), >= 0
  Var mask_h;  // (n, 1, h, w), >= 0
};

GateOutput gate_forward(Tape& tape, GateModule& gate, Var x_v, Var x_h,
                        const ForwardContext& ctx);

// Pins the comparison output to constant masks (mask_v, mask_h) by zeroing
// the comparison batch-norm scale; both must be >= 0.
void force_gate_masks(GateModule& gate, double mask_v, double mask_h);

// Non-owning view of one bottlenecked branch of a SuperNet model.
struct BranchParams {
  ConvBnBlock* squeeze = nullptr;
  ConvBnBlock* conv_a = nullptr;
  ConvBnBlock* conv_b = nullptr;
  ConvBnBlock* excite = nullptr;
};

struct BranchResult {
  Var output;
  std::array<Var, 2> layer_outputs;
  std::array<std::optional<GateOutput>, 2> gates;
};

// squeeze -> [merge, conv_a] -> [merge, conv_b] -> excite. A layer with a
// vertical feed merges it with the horizontal input through its gate, or by
// summation when no gate is given. A gate without a vertical feed is a
// graph/runtime mismatch (UsageError).
BranchResult branch_forward(Tape& tape, const BranchParams& branch,
                            Var entrance,
                            const std::array<std::optional<Var>, 2>& vertical,
                            const std::array<GateModule*, 2>& gates,
                            const ForwardContext& ctx);

// Runtime realisation of a GraphSpec: one ConvBnBlock per conv node, one
// GateModule per gate_merge node and a 1x1 fuse block on the exit.
struct SuperNetModel {
  GraphSpec graph;
  std::map<std::string, ConvBnBlock> convs;
  std::map<std::string, GateModule> gates;
  ConvBnBlock fuse;

  // Validates the graph (ValidationError) and initialises parameters from
  // `seed`. The graph must have exactly one exit.
  static SuperNetModel create(GraphSpec graph, std::size_t head_ch,
                              std::uint64_t seed);

  std::size_t in_channels() const;
  std::size_t exit_channels() const;
  std::size_t head_channels() const { return fuse.conv.out_channels(); }

  // Deterministic order: convs by node id, gates by node id, then fuse.
  std::vector<NamedTensor> parameters();
  std::vector<NamedBuffer> buffers();

  // View of branch b (1-based) of a build_supernet graph.
  BranchParams branch(int b);
  int branch_count() const;
};

struct GateMasks {
  Var mask_v;
  Var mask_h;
};

struct SuperNetOutput {
  Var features;  // fuse output, (n, head_ch, h, w)
  Var exit;      // exit node output before fuse
  std::map<std::string, GateMasks> gate_masks;
  std::map<std::string, Var> node_outputs;
};

SuperNetOutput supernet_forward(Tape& tape, SuperNetModel& model, Var x,
                                const ForwardContext& ctx);

// Sets every parameter to the values that turn the model into a support
// probe: all-ones conv weights, zero biases, identity batch norm, unit gates.
void make_impulse_probe(SuperNetModel& model);

struct ParamCountOptions {
  bool bias = true;
  bool batchnorm = true;
};

struct ParamCount {
  std::size_t total = 0;
  std::size_t gates = 0;
  std::map<std::string, std::size_t> per_node;
};

std::size_t conv_param_count(std::size_t in_ch, std::size_t out_ch, int kernel,
                             const ParamCountOptions& opts);
std::size_t gate_param_count(std::size_t channels,
                             const ParamCountOptions& opts);

// Static count over a graph (fuse block excluded: it is not a graph node).
ParamCount count_params(const GraphSpec& graph,
                        const ParamCountOptions& opts = {});
// Number of scalars in model.parameters().
std::size_t count_params(SuperNetModel& model);

}  // namespace gpsnet
