#include <cmath>

#include <fmt/format.h>

#include "gpsnet/errors.hpp"
#include "gpsnet/gpsnet.hpp"

namespace gpsnet {

ConvBnBlock ConvBnBlock::make(std::size_t in_ch, std::size_t out_ch,
                              int kernel, int dilation) {
  return ConvBnBlock{make_conv(in_ch, out_ch, kernel, dilation, true),
                     BatchNormParams::identity(out_ch)};
}

Var conv_bn_relu(Tape& tape, ConvBnBlock& block, Var x,
                 const ForwardContext& ctx) {
  Var y = conv2d(tape, x, block.conv);
  y = batchnorm(tape, y, block.bn, ctx.mode, ctx.update_stats);
  return relu(tape, y);
}

void init_block(ConvBnBlock& block, std::mt19937_64& rng) {
  const Shape4 s = block.conv.weight.shape();
  const double fan_in = static_cast<double>(s.c * s.h * s.w);
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (double& v : block.conv.weight.data()) v = dist(rng);
  block.conv.bias.fill(0.0);
  block.bn = BatchNormParams::identity(s.n);
}

void collect_parameters(const std::string& prefix, ConvBnBlock& block,
                        std::vector<NamedTensor>& out) {
  out.push_back({prefix + ".conv.weight", &block.conv.weight});
  if (block.conv.has_bias()) {
    out.push_back({prefix + ".conv.bias", &block.conv.bias});
  }
  out.push_back({prefix + ".bn.gamma", &block.bn.gamma});
  out.push_back({prefix + ".bn.beta", &block.bn.beta});
}

void collect_buffers(const std::string& prefix, ConvBnBlock& block,
                     std::vector<NamedBuffer>& out) {
  out.push_back({prefix + ".bn.running_mean", &block.bn.running_mean});
  out.push_back({prefix + ".bn.running_var", &block.bn.running_var});
}

GateModule GateModule::make(std::size_t channels) {
  return GateModule{ConvBnBlock::make(channels, 1, 1),
                    ConvBnBlock::make(channels, 1, 1),
                    ConvBnBlock::make(2, 2, 1)};
}

GateOutput gate_forward(Tape& tape, GateModule& gate, Var x_v, Var x_h,
                        const ForwardContext& ctx) {
  require_same_shape(tape.value(x_v).shape(), tape.value(x_h).shape(),
                     "gate_forward inputs");
  Var m_v = conv_bn_relu(tape, gate.proj_v, x_v, ctx);
  Var m_h = conv_bn_relu(tape, gate.proj_h, x_h, ctx);
  const Var pair[] = {m_v, m_h};
  Var m_c = concat_channels(tape, pair);
  Var m_prime = conv_bn_relu(tape, gate.cmp, m_c, ctx);
  const std::size_t sizes[] = {1, 1};
  auto masks = split_channels(tape, m_prime, sizes);
  Var out = add(tape, mul_channel_broadcast(tape, x_v, masks[0]),
                mul_channel_broadcast(tape, x_h, masks[1]));
  return GateOutput{out, masks[0], masks[1]};
}

void force_gate_masks(GateModule& gate, double mask_v, double mask_h) {
  if (mask_v < 0.0 || mask_h < 0.0) {
    throw ConfigError("force_gate_masks: masks pass through ReLU, need >= 0");
  }
  gate.cmp.bn.gamma.fill(0.0);
  gate.cmp.bn.beta[0] = mask_v;
  gate.cmp.bn.beta[1] = mask_h;
}

BranchResult branch_forward(Tape& tape, const BranchParams& branch,
                            Var entrance,
                            const std::array<std::optional<Var>, 2>& vertical,
                            const std::array<GateModule*, 2>& gates,
                            const ForwardContext& ctx) {
  if (branch.squeeze == nullptr || branch.conv_a == nullptr ||
      branch.conv_b == nullptr || branch.excite == nullptr) {
    throw UsageError("branch_forward: incomplete BranchParams");
  }
  BranchResult result;
  Var h = conv_bn_relu(tape, *branch.squeeze, entrance, ctx);
  ConvBnBlock* convs[2] = {branch.conv_a, branch.conv_b};
  for (std::size_t l = 0; l < 2; ++l) {
    Var feed = h;
    if (gates[l] != nullptr && !vertical[l]) {
      throw UsageError(fmt::format(
          "branch_forward: layer {} has a gate but no vertical feed", l + 1));
    }
    if (vertical[l]) {
      require_same_shape(tape.value(*vertical[l]).shape(),
                         tape.value(h).shape(), "branch_forward vertical feed");
      if (gates[l] != nullptr) {
        GateOutput g = gate_forward(tape, *gates[l], *vertical[l], h, ctx);
        result.gates[l] = g;
        feed = g.out;
      } else {
        feed = add(tape, *vertical[l], h);
      }
    }
    h = conv_bn_relu(tape, *convs[l], feed, ctx);
    result.layer_outputs[l] = h;
  }
  result.output = conv_bn_relu(tape, *branch.excite, h, ctx);
  return result;
}

}  // namespace gpsnet
