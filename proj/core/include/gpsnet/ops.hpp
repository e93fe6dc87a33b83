#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "gpsnet/tape.hpp"
#include "gpsnet/tensor.hpp"

namespace gpsnet {

enum class BnMode { kTrain, kEval };

// Square stride-1 convolution. weight is (out, in, k, k), bias is (1, out, 1, 1)
// or empty for no bias.
struct ConvParams {
  Tensor4 weight;
  Tensor4 bias;
  int dilation = 1;
  int padding = 0;

  std::size_t out_channels() const { return weight.shape().n; }
  std::size_t in_channels() const { return weight.shape().c; }
  int kernel() const { return static_cast<int>(weight.shape().h); }
  bool has_bias() const { return !bias.empty(); }
};

// r * (k - 1) / 2. Throws ConfigError for even k or non-positive r.
int same_padding(int kernel, int dilation);

// Zero-initialised same-size convolution.
ConvParams make_conv(std::size_t in_ch, std::size_t out_ch, int kernel,
                     int dilation = 1, bool bias = true);

struct BatchNormParams {
  Tensor4 gamma;  // (1, C, 1, 1)
  Tensor4 beta;   // (1, C, 1, 1)
  std::vector<double> running_mean;
  std::vector<double> running_var;
  double eps = 1e-5;
  double momentum = 0.1;

  std::size_t channels() const { return gamma.shape().c; }
  // gamma 1, beta 0, running mean 0, running variance 1.
  static BatchNormParams identity(std::size_t channels);
};

// Forward-only dilated correlation; output spatial size is
// h + 2 * padding - dilation * (k - 1).
Tensor4 conv2d_forward(const Tensor4& x, const Tensor4& weight,
                       const Tensor4* bias, int dilation, int padding);

// `bias` may be an invalid Var for no bias.
Var conv2d(Tape& tape, Var x, Var weight, Var bias, int dilation, int padding);
Var conv2d(Tape& tape, Var x, const ConvParams& p);
// Same as conv2d but insists on a 1x1 kernel with no padding.
Var conv1x1(Tape& tape, Var x, const ConvParams& p);

// Per-channel normalisation over (n, h, w). In train mode running statistics
// are updated when `update_stats` is set; eval mode reads them.
Var batchnorm(Tape& tape, Var x, Var gamma, Var beta, BatchNormParams& state,
              BnMode mode, bool update_stats = true);
Var batchnorm(Tape& tape, Var x, BatchNormParams& state, BnMode mode,
              bool update_stats = true);

Var relu(Tape& tape, Var x);
Var add(Tape& tape, Var a, Var b);
// x is (n, C, h, w), mask is (n, 1, h, w); mask value scales all C channels.
Var mul_channel_broadcast(Tape& tape, Var x, Var mask);
Var concat_channels(Tape& tape, std::span<const Var> parts);
std::vector<Var> split_channels(Tape& tape, Var x,
                                std::span<const std::size_t> sizes);
// Sum of all elements as a scalar.
Var sum(Tape& tape, Var x);
// Sum of x * weights as a scalar; weights are a constant.
Var dot(Tape& tape, Var x, const Tensor4& weights);

// Channel softmax, forward only.
Tensor4 softmax_channels(const Tensor4& logits);

struct CrossEntropy {
  Var loss;                // mean over counted pixels
  Tensor4 true_class_prob; // (n, 1, h, w); 0 at ignored pixels
  std::size_t counted = 0;
  bool all_ignored = false;  // loss is defined as 0 in that case
};

// labels hold n*h*w class ids in [0, K) or ignore_index.
CrossEntropy softmax_cross_entropy(Tape& tape, Var logits,
                                   std::span<const int> labels,
                                   int ignore_index);

}  // namespace gpsnet
