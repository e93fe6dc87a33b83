#include <algorithm>

#include <fmt/format.h>

#include "gpsnet/errors.hpp"
#include "gpsnet/gpsnet.hpp"

namespace gpsnet {

SuperNetModel SuperNetModel::create(GraphSpec graph, std::size_t head_ch,
                                    std::uint64_t seed) {
  require_valid(graph);
  int exits = 0;
  for (const NodeSpec& n : graph.nodes) {
    if (n.kind == NodeKind::kExit) ++exits;
  }
  if (exits != 1) {
    throw ConfigError(fmt::format(
        "graph '{}' has {} exits; the runtime needs exactly one", graph.name,
        exits));
  }
  if (head_ch == 0) throw ConfigError("SuperNetModel: head_ch must be > 0");

  SuperNetModel m;
  const auto channels = output_channels(graph);
  for (const NodeSpec& n : graph.nodes) {
    if (is_conv(n.kind)) {
      m.convs.emplace(n.id, ConvBnBlock::make(n.in_ch, n.out_ch, n.kernel,
                                              std::max(n.dilation, 1)));
    } else if (n.kind == NodeKind::kGateMerge) {
      const GateSpec* gate = graph.gate_for(n.id);
      m.gates.emplace(n.id, GateModule::make(channels.at(gate->vertical)));
    }
  }
  std::size_t exit_ch = 0;
  for (const NodeSpec& n : graph.nodes) {
    if (n.kind == NodeKind::kExit) exit_ch = channels.at(n.id);
  }
  m.fuse = ConvBnBlock::make(exit_ch, head_ch, 1);
  m.graph = std::move(graph);

  std::mt19937_64 rng(seed);
  for (auto& [id, block] : m.convs) init_block(block, rng);
  for (auto& [id, gate] : m.gates) {
    init_block(gate.proj_v, rng);
    init_block(gate.proj_h, rng);
    init_block(gate.cmp, rng);
  }
  init_block(m.fuse, rng);
  return m;
}

std::size_t SuperNetModel::in_channels() const {
  for (const NodeSpec& n : graph.nodes) {
    if (n.kind == NodeKind::kEntrance) return n.out_ch;
  }
  return 0;
}

std::size_t SuperNetModel::exit_channels() const {
  return fuse.conv.in_channels();
}

std::vector<NamedTensor> SuperNetModel::parameters() {
  std::vector<NamedTensor> out;
  for (auto& [id, block] : convs) collect_parameters(id, block, out);
  for (auto& [id, gate] : gates) {
    collect_parameters(id + ".gate.proj_v", gate.proj_v, out);
    collect_parameters(id + ".gate.proj_h", gate.proj_h, out);
    collect_parameters(id + ".gate.cmp", gate.cmp, out);
  }
  collect_parameters("fuse", fuse, out);
  return out;
}

std::vector<NamedBuffer> SuperNetModel::buffers() {
  std::vector<NamedBuffer> out;
  for (auto& [id, block] : convs) collect_buffers(id, block, out);
  for (auto& [id, gate] : gates) {
    collect_buffers(id + ".gate.proj_v", gate.proj_v, out);
    collect_buffers(id + ".gate.proj_h", gate.proj_h, out);
    collect_buffers(id + ".gate.cmp", gate.cmp, out);
  }
  collect_buffers("fuse", fuse, out);
  return out;
}

BranchParams SuperNetModel::branch(int b) {
  auto get = [&](const std::string& id) {
    auto it = convs.find(id);
    if (it == convs.end()) {
      throw UsageError(fmt::format("graph '{}' has no SuperNet node '{}'",
                                   graph.name, id));
    }
    return &it->second;
  };
  return BranchParams{get(fmt::format("b{}.squeeze", b)),
                      get(fmt::format("b{}.l1.conv", b)),
                      get(fmt::format("b{}.l2.conv", b)),
                      get(fmt::format("b{}.excite", b))};
}

int SuperNetModel::branch_count() const {
  int count = 0;
  for (const NodeSpec& n : graph.nodes) {
    if (n.kind == NodeKind::kExcite1x1) ++count;
  }
  return count;
}

SuperNetOutput supernet_forward(Tape& tape, SuperNetModel& model, Var x,
                                const ForwardContext& ctx) {
  const GraphSpec& g = model.graph;
  const Shape4 xs = tape.value(x).shape();
  SuperNetOutput result;
  std::map<std::string, Var>& out = result.node_outputs;
  std::optional<Var> exit_value;

  for (const std::string& id : topological_order(g)) {
    const NodeSpec& n = g.node(id);
    std::vector<Var> inputs;
    for (const EdgeSpec* e : g.incoming(id)) inputs.push_back(out.at(e->from));

    switch (n.kind) {
      case NodeKind::kEntrance:
        if (xs.c != n.out_ch) {
          throw ShapeError(fmt::format(
              "supernet_forward: input has {} channels, entrance '{}' expects "
              "{}",
              xs.c, id, n.out_ch));
        }
        out[id] = x;
        break;
      case NodeKind::kSqueeze1x1:
      case NodeKind::kAtrous3x3:
      case NodeKind::kExcite1x1: {
        auto it = model.convs.find(id);
        if (it == model.convs.end()) {
          throw UsageError(fmt::format("model has no parameters for '{}'", id));
        }
        out[id] = conv_bn_relu(tape, it->second, inputs.at(0), ctx);
        break;
      }
      case NodeKind::kGateMerge: {
        const GateSpec* spec = g.gate_for(id);
        auto it = model.gates.find(id);
        if (spec == nullptr || it == model.gates.end()) {
          throw UsageError(fmt::format("model has no gate for '{}'", id));
        }
        GateOutput o = gate_forward(tape, it->second, out.at(spec->vertical),
                                    out.at(spec->horizontal), ctx);
        out[id] = o.out;
        result.gate_masks[id] = GateMasks{o.mask_v, o.mask_h};
        break;
      }
      case NodeKind::kSumMerge: {
        Var acc = inputs.at(0);
        for (std::size_t i = 1; i < inputs.size(); ++i) {
          acc = add(tape, acc, inputs[i]);
        }
        out[id] = acc;
        break;
      }
      case NodeKind::kConcatMerge:
      case NodeKind::kExit:
        out[id] = inputs.size() == 1 ? inputs[0]
                                     : concat_channels(tape, inputs);
        if (n.kind == NodeKind::kExit) exit_value = out[id];
        break;
    }
  }
  if (!exit_value) throw UsageError("supernet_forward: graph has no exit");
  result.exit = *exit_value;
  result.features = conv_bn_relu(tape, model.fuse, *exit_value, ctx);
  return result;
}

void make_impulse_probe(SuperNetModel& model) {
  auto probe = [](ConvBnBlock& b) {
    b.conv.weight.fill(1.0);
    b.conv.bias.fill(0.0);
    b.bn = BatchNormParams::identity(b.conv.out_channels());
  };
  for (auto& [id, block] : model.convs) probe(block);
  for (auto& [id, gate] : model.gates) {
    probe(gate.proj_v);
    probe(gate.proj_h);
    probe(gate.cmp);
    force_gate_masks(gate, 1.0, 1.0);
  }
  probe(model.fuse);
}

}  // namespace gpsnet
