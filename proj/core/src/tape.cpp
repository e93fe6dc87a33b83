#include "gpsnet/tape.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "gpsnet/errors.hpp"

namespace gpsnet {

const Tape::Node& Tape::node(Var v) const {
  if (!v.valid() || v.id >= nodes_.size()) {
    throw UsageError(fmt::format("Var {} is not recorded on this tape",
                                 v.valid() ? static_cast<long long>(v.id) : -1));
  }
  return nodes_[v.id];
}

Tape::Node& Tape::node(Var v) {
  return const_cast<Node&>(std::as_const(*this).node(v));
}

Var Tape::constant(Tensor4 value) {
  nodes_.push_back(Node{std::move(value), {}, false, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::leaf(Tensor4 value) {
  nodes_.push_back(Node{std::move(value), {}, true, {}});
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(const Tensor4& param) {
  if (auto it = bound_.find(&param); it != bound_.end()) {
    return it->second;
  }
  Var v = leaf(param);
  bound_.emplace(&param, v);
  return v;
}

Var Tape::record(Tensor4 value, const std::vector<Var>& inputs,
                 BackwardFn fn) {
  if (backward_done_) {
    throw UsageError("cannot record on a tape after backward()");
  }
  bool needs = std::any_of(inputs.begin(), inputs.end(),
                           [this](Var v) { return requires_grad(v); });
  nodes_.push_back(
      Node{std::move(value), {}, needs, needs ? std::move(fn) : BackwardFn{}});
  return Var{nodes_.size() - 1};
}

const Tensor4& Tape::value(Var v) const { return node(v).value; }

bool Tape::requires_grad(Var v) const { return node(v).requires_grad; }

const Tensor4& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!n.requires_grad) {
    throw UsageError("grad() on a value that does not require a gradient");
  }
  if (!backward_done_) {
    throw UsageError("grad() before backward()");
  }
  if (n.grad.empty() && n.value.numel() > 0) {
    const_cast<Node&>(n).grad = Tensor4(n.value.shape(), 0.0);
  }
  return n.grad;
}

std::optional<Tensor4> Tape::grad_of(const Tensor4& param) const {
  auto it = bound_.find(&param);
  if (it == bound_.end()) return std::nullopt;
  return grad(it->second);
}

Tensor4* Tape::grad_buffer(Var v) {
  Node& n = node(v);
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor4(n.value.shape(), 0.0);
  return &n.grad;
}

void Tape::accumulate(Var v, const Tensor4& delta) {
  Tensor4* g = grad_buffer(v);
  if (g == nullptr) return;
  require_same_shape(g->shape(), delta.shape(), "gradient accumulation");
  auto dst = g->data();
  auto src = delta.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

void Tape::backward(Var loss) {
  if (nodes_.empty()) {
    throw UsageError("backward() on an empty tape");
  }
  if (backward_done_) {
    throw UsageError("backward() called twice on the same tape");
  }
  Node& root = node(loss);
  if (root.value.numel() != 1) {
    throw UsageError(fmt::format("backward() needs a scalar loss, got shape {}",
                                 root.value.shape().str()));
  }
  if (!root.requires_grad) {
    throw UsageError("loss does not depend on any recorded gradient input");
  }
  backward_done_ = true;
  root.grad = Tensor4(root.value.shape(), 1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    backward_order_.push_back(i);
    // Backward fns only touch buffers of earlier nodes; nodes_ never grows
    // after backward starts, so the reference stays valid.
    n.backward(*this, n.grad);
  }
}

}  // namespace gpsnet
