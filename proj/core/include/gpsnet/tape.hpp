#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <vector>

#include "gpsnet/tensor.hpp"

namespace gpsnet {

// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;

  bool valid() const { return id != kNone; }
  friend bool operator==(Var, Var) = default;
};

class Tape;

// Receives the gradient of the loss w.r.t. the op output and accumulates into
// the op inputs through Tape::accumulate.
using BackwardFn = std::function<void(Tape&, const Tensor4& out_grad)>;

// Ordered record of executed operations. One tape covers one forward pass and
// at most one backward pass; it is not thread-safe, but independent tapes can
// be used concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  Tape(Tape&&) = default;
  Tape& operator=(Tape&&) = default;

  // Value that never receives a gradient.
  Var constant(Tensor4 value);
  // Leaf that receives a gradient.
  Var leaf(Tensor4 value);
  // Leaf bound to an external parameter tensor. Binding the same tensor twice
  // returns the same Var, so shared parameters accumulate correctly.
  Var parameter(const Tensor4& param);

  // Used by op implementations. The backward function is dropped when no
  // input requires a gradient.
  Var record(Tensor4 value, const std::vector<Var>& inputs, BackwardFn fn);

  const Tensor4& value(Var v) const;
  bool requires_grad(Var v) const;
  // Gradient after backward(); zeros for leaves the loss does not reach.
  const Tensor4& grad(Var v) const;
  // Gradient of a bound parameter, or nullopt if it was never bound.
  std::optional<Tensor4> grad_of(const Tensor4& param) const;

  // Adds `delta` into the gradient buffer of `v` (no-op when v does not
  // require a gradient).
  void accumulate(Var v, const Tensor4& delta);
  // Mutable gradient buffer for in-place accumulation, or nullptr when `v`
  // does not require a gradient.
  Tensor4* grad_buffer(Var v);

  // Reverse-mode sweep from a single-element loss.
  void backward(Var loss);

  // Fingerprint of every piecewise-linear branch taken so far (ReLU signs).
  // Two evaluations with equal signatures lie on the same linear piece.
  void mix_kink_signature(std::uint64_t pattern) {
    kink_signature_ = (kink_signature_ ^ pattern) * 0x100000001b3ULL;
  }
  std::uint64_t kink_signature() const { return kink_signature_; }

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }
  // Node ids whose backward functions ran, in the order they ran.
  const std::vector<std::size_t>& backward_order() const {
    return backward_order_;
  }

 private:
  struct Node {
    Tensor4 value;
    Tensor4 grad;  // empty until first accumulation
    bool requires_grad = false;
    BackwardFn backward;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  std::map<const Tensor4*, Var> bound_;
  std::vector<std::size_t> backward_order_;
  bool backward_done_ = false;
  std::uint64_t kink_signature_ = 0xcbf29ce484222325ULL;
};

}  // namespace gpsnet
