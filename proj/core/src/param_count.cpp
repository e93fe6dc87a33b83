#include "gpsnet/gpsnet.hpp"

namespace gpsnet {

std::size_t conv_param_count(std::size_t in_ch, std::size_t out_ch, int kernel,
                             const ParamCountOptions& opts) {
  const auto k = static_cast<std::size_t>(kernel);
  std::size_t n = in_ch * out_ch * k * k;
  if (opts.bias) n += out_ch;
  if (opts.batchnorm) n += 2 * out_ch;
  return n;
}

std::size_t gate_param_count(std::size_t channels,
                             const ParamCountOptions& opts) {
  return 2 * conv_param_count(channels, 1, 1, opts) +
         conv_param_count(2, 2, 1, opts);
}

ParamCount count_params(const GraphSpec& graph, const ParamCountOptions& opts) {
  require_valid(graph);
  const auto channels = output_channels(graph);
  ParamCount count;
  for (const NodeSpec& n : graph.nodes) {
    std::size_t p = 0;
    if (is_conv(n.kind)) {
      p = conv_param_count(n.in_ch, n.out_ch, n.kernel, opts);
    } else if (n.kind == NodeKind::kGateMerge) {
      p = gate_param_count(channels.at(graph.gate_for(n.id)->vertical), opts);
      count.gates += p;
    }
    count.per_node[n.id] = p;
    count.total += p;
  }
  return count;
}

std::size_t count_params(SuperNetModel& model) {
  std::size_t n = 0;
  for (const NamedTensor& p : model.parameters()) n += p.tensor->numel();
  return n;
}

}  // namespace gpsnet
