#include "gpsnet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include <Eigen/Core>
#include <fmt/format.h>

#include "gpsnet/errors.hpp"

namespace gpsnet {
namespace {

using ColMajor = Eigen::Map<Eigen::MatrixXd>;
using ConstColMajor = Eigen::Map<const Eigen::MatrixXd>;

// Geometry of one stride-1 convolution call.
struct ConvGeometry {
  std::size_t n, cin, cout, k, h, w, ho, wo;
  int dilation, padding;

  std::size_t in_plane() const { return h * w; }
  std::size_t out_plane() const { return ho * wo; }

  // Output rows [lo, hi) whose shifted source row is inside the input.
  std::pair<std::size_t, std::size_t> valid_range(int offset, std::size_t in,
                                                  std::size_t out) const {
    long lo = std::max<long>(0, -offset);
    long hi = std::min<long>(static_cast<long>(out),
                             static_cast<long>(in) - offset);
    if (hi <= lo) return {0, 0};
    return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
  }
};

ConvGeometry conv_geometry(const Shape4& x, const Shape4& weight, int dilation,
                           int padding) {
  if (weight.h != weight.w) {
    throw ConfigError(fmt::format("conv2d: non-square kernel {}x{}", weight.h,
                                  weight.w));
  }
  if (dilation < 1) {
    throw ConfigError(fmt::format("conv2d: dilation {} < 1", dilation));
  }
  if (padding < 0) {
    throw ConfigError(fmt::format("conv2d: negative padding {}", padding));
  }
  if (x.c != weight.c) {
    throw ShapeError(fmt::format(
        "conv2d: input has {} channels, weight expects {}", x.c, weight.c));
  }
  const long span = static_cast<long>(dilation) *
                    (static_cast<long>(weight.h) - 1);
  const long ho = static_cast<long>(x.h) + 2L * padding - span;
  const long wo = static_cast<long>(x.w) + 2L * padding - span;
  if (ho <= 0 || wo <= 0) {
    throw ShapeError(fmt::format(
        "conv2d: input {} too small for kernel {} dilation {} padding {}",
        x.str(), weight.h, dilation, padding));
  }
  return ConvGeometry{x.n,
                      x.c,
                      weight.n,
                      weight.h,
                      x.h,
                      x.w,
                      static_cast<std::size_t>(ho),
                      static_cast<std::size_t>(wo),
                      dilation,
                      padding};
}

// Tap (i, j) of the kernel as a (cin x cout) matrix.
Eigen::MatrixXd tap_matrix(const Tensor4& weight, std::size_t i,
                           std::size_t j) {
  const Shape4& s = weight.shape();
  Eigen::MatrixXd m(s.c, s.n);
  for (std::size_t o = 0; o < s.n; ++o) {
    for (std::size_t c = 0; c < s.c; ++c) {
      m(c, o) = weight.at(o, c, i, j);
    }
  }
  return m;
}

// Copies the input plane shifted by (dy, dx) into a (out_plane x cin)
// column-major matrix, zero outside the input.
void gather_shifted(const ConvGeometry& g, const double* x, int dy, int dx,
                    std::pair<std::size_t, std::size_t> rows,
                    std::pair<std::size_t, std::size_t> cols,
                    Eigen::MatrixXd& out) {
  out.setZero(g.out_plane(), g.cin);
  const std::size_t len = cols.second - cols.first;
  for (std::size_t c = 0; c < g.cin; ++c) {
    const double* src = x + c * g.in_plane();
    double* dst = out.data() + c * g.out_plane();
    for (std::size_t y = rows.first; y < rows.second; ++y) {
      const std::size_t sy = static_cast<std::size_t>(static_cast<long>(y) + dy);
      const std::size_t sx =
          static_cast<std::size_t>(static_cast<long>(cols.first) + dx);
      std::copy_n(src + sy * g.w + sx, len, dst + y * g.wo + cols.first);
    }
  }
}

// Inverse of gather_shifted: adds the shifted matrix back into an input plane.
void scatter_shifted_add(const ConvGeometry& g, const Eigen::MatrixXd& m,
                         int dy, int dx,
                         std::pair<std::size_t, std::size_t> rows,
                         std::pair<std::size_t, std::size_t> cols, double* x) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    double* dst = x + c * g.in_plane();
    const double* src = m.data() + c * g.out_plane();
    for (std::size_t y = rows.first; y < rows.second; ++y) {
      const std::size_t sy = static_cast<std::size_t>(static_cast<long>(y) + dy);
      for (std::size_t xx = cols.first; xx < cols.second; ++xx) {
        const std::size_t sx =
            static_cast<std::size_t>(static_cast<long>(xx) + dx);
        dst[sy * g.w + sx] += src[y * g.wo + xx];
      }
    }
  }
}

struct Tap {
  std::size_t i, j;
  int dy, dx;
  std::pair<std::size_t, std::size_t> rows, cols;
  // The shifted input is the input itself; no gather needed.
  bool identity;
};

std::vector<Tap> live_taps(const ConvGeometry& g) {
  std::vector<Tap> taps;
  for (std::size_t i = 0; i < g.k; ++i) {
    for (std::size_t j = 0; j < g.k; ++j) {
      const int dy = static_cast<int>(i) * g.dilation - g.padding;
      const int dx = static_cast<int>(j) * g.dilation - g.padding;
      auto rows = g.valid_range(dy, g.h, g.ho);
      auto cols = g.valid_range(dx, g.w, g.wo);
      if (rows.first == rows.second || cols.first == cols.second) continue;
      const bool identity =
          dy == 0 && dx == 0 && g.ho == g.h && g.wo == g.w;
      taps.push_back(Tap{i, j, dy, dx, rows, cols, identity});
    }
  }
  return taps;
}

void check_bias(const Tensor4* bias, std::size_t cout) {
  if (bias == nullptr || bias->empty()) return;
  if (!(bias->shape() == Shape4{1, cout, 1, 1})) {
    throw ShapeError(fmt::format("conv2d: bias shape {} for {} outputs",
                                 bias->shape().str(), cout));
  }
}

Tensor4 conv_forward_impl(const ConvGeometry& g, const Tensor4& x,
                          const Tensor4& weight, const Tensor4* bias) {
  Tensor4 out(Shape4{g.n, g.cout, g.ho, g.wo}, 0.0);
  const auto taps = live_taps(g);
  std::vector<Eigen::MatrixXd> mats;
  mats.reserve(taps.size());
  for (const Tap& t : taps) mats.push_back(tap_matrix(weight, t.i, t.j));

  Eigen::MatrixXd shifted;
  for (std::size_t b = 0; b < g.n; ++b) {
    const double* xb = x.data().data() + b * g.cin * g.in_plane();
    ColMajor ob(out.data().data() + b * g.cout * g.out_plane(), g.out_plane(),
                g.cout);
    for (std::size_t t = 0; t < taps.size(); ++t) {
      if (taps[t].identity) {
        ConstColMajor xm(xb, g.in_plane(), g.cin);
        ob.noalias() += xm * mats[t];
      } else {
        gather_shifted(g, xb, taps[t].dy, taps[t].dx, taps[t].rows,
                       taps[t].cols, shifted);
        ob.noalias() += shifted * mats[t];
      }
    }
    if (bias != nullptr && !bias->empty()) {
      for (std::size_t o = 0; o < g.cout; ++o) {
        ob.col(static_cast<Eigen::Index>(o)).array() += (*bias)[o];
      }
    }
  }
  return out;
}

const Shape4& shape_of(const Tape& tape, Var v) { return tape.value(v).shape(); }

}  // namespace

int same_padding(int kernel, int dilation) {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError(
        fmt::format("same-size convolution needs an odd kernel, got {}", kernel));
  }
  if (dilation < 1) {
    throw ConfigError(fmt::format("dilation {} < 1", dilation));
  }
  return dilation * (kernel - 1) / 2;
}

ConvParams make_conv(std::size_t in_ch, std::size_t out_ch, int kernel,
                     int dilation, bool bias) {
  ConvParams p;
  p.padding = same_padding(kernel, dilation);
  p.dilation = dilation;
  const auto k = static_cast<std::size_t>(kernel);
  p.weight = Tensor4(Shape4{out_ch, in_ch, k, k}, 0.0);
  if (bias) p.bias = Tensor4(Shape4{1, out_ch, 1, 1}, 0.0);
  return p;
}

BatchNormParams BatchNormParams::identity(std::size_t channels) {
  BatchNormParams p;
  p.gamma = Tensor4(Shape4{1, channels, 1, 1}, 1.0);
  p.beta = Tensor4(Shape4{1, channels, 1, 1}, 0.0);
  p.running_mean.assign(channels, 0.0);
  p.running_var.assign(channels, 1.0);
  return p;
}

Tensor4 conv2d_forward(const Tensor4& x, const Tensor4& weight,
                       const Tensor4* bias, int dilation, int padding) {
  const ConvGeometry g =
      conv_geometry(x.shape(), weight.shape(), dilation, padding);
  check_bias(bias, g.cout);
  return conv_forward_impl(g, x, weight, bias);
}

Var conv2d(Tape& tape, Var x, Var weight, Var bias, int dilation,
           int padding) {
  const Tensor4& xv = tape.value(x);
  const Tensor4& wv = tape.value(weight);
  const Tensor4* bv = bias.valid() ? &tape.value(bias) : nullptr;
  const ConvGeometry g = conv_geometry(xv.shape(), wv.shape(), dilation, padding);
  check_bias(bv, g.cout);
  Tensor4 out = conv_forward_impl(g, xv, wv, bv);

  std::vector<Var> inputs{x, weight};
  if (bias.valid()) inputs.push_back(bias);
  return tape.record(
      std::move(out), inputs, [=](Tape& t, const Tensor4& gout) {
        const Tensor4& xv = t.value(x);
        const Tensor4& wv = t.value(weight);
        Tensor4* gx = t.grad_buffer(x);
        Tensor4* gw = t.grad_buffer(weight);
        Tensor4* gb = bias.valid() ? t.grad_buffer(bias) : nullptr;
        const auto taps = live_taps(g);

        if (gb != nullptr) {
          for (std::size_t b = 0; b < g.n; ++b) {
            ConstColMajor go(gout.data().data() + b * g.cout * g.out_plane(),
                             g.out_plane(), g.cout);
            for (std::size_t o = 0; o < g.cout; ++o) {
              (*gb)[o] += go.col(static_cast<Eigen::Index>(o)).sum();
            }
          }
        }

        Eigen::MatrixXd shifted;
        Eigen::MatrixXd dshift;
        for (const Tap& tap : taps) {
          const Eigen::MatrixXd wt = tap_matrix(wv, tap.i, tap.j);
          Eigen::MatrixXd dwt = Eigen::MatrixXd::Zero(g.cin, g.cout);
          for (std::size_t b = 0; b < g.n; ++b) {
            const double* xb = xv.data().data() + b * g.cin * g.in_plane();
            ConstColMajor go(gout.data().data() + b * g.cout * g.out_plane(),
                             g.out_plane(), g.cout);
            if (gw != nullptr) {
              if (tap.identity) {
                ConstColMajor xm(xb, g.in_plane(), g.cin);
                dwt.noalias() += xm.transpose() * go;
              } else {
                gather_shifted(g, xb, tap.dy, tap.dx, tap.rows, tap.cols,
                               shifted);
                dwt.noalias() += shifted.transpose() * go;
              }
            }
            if (gx != nullptr) {
              double* gxb = gx->data().data() + b * g.cin * g.in_plane();
              if (tap.identity) {
                ColMajor gxm(gxb, g.in_plane(), g.cin);
                gxm.noalias() += go * wt.transpose();
              } else {
                dshift.noalias() = go * wt.transpose();
                scatter_shifted_add(g, dshift, tap.dy, tap.dx, tap.rows,
                                    tap.cols, gxb);
              }
            }
          }
          if (gw != nullptr) {
            for (std::size_t o = 0; o < g.cout; ++o) {
              for (std::size_t c = 0; c < g.cin; ++c) {
                gw->at(o, c, tap.i, tap.j) +=
                    dwt(static_cast<Eigen::Index>(c),
                        static_cast<Eigen::Index>(o));
              }
            }
          }
        }
      });
}

Var conv2d(Tape& tape, Var x, const ConvParams& p) {
  Var w = tape.parameter(p.weight);
  Var b = p.has_bias() ? tape.parameter(p.bias) : Var{};
  return conv2d(tape, x, w, b, p.dilation, p.padding);
}

Var conv1x1(Tape& tape, Var x, const ConvParams& p) {
  if (p.kernel() != 1 || p.padding != 0) {
    throw ConfigError(fmt::format("conv1x1: kernel {} padding {}", p.kernel(),
                                  p.padding));
  }
  return conv2d(tape, x, p);
}

Var batchnorm(Tape& tape, Var x, Var gamma, Var beta, BatchNormParams& state,
              BnMode mode, bool update_stats) {
  const Tensor4& xv = tape.value(x);
  const Shape4 s = xv.shape();
  const std::size_t count = s.n * s.h * s.w;
  if (count == 0 || s.c == 0) {
    throw ConfigError(fmt::format("batchnorm: empty input {}", s.str()));
  }
  if (mode == BnMode::kTrain && count < 2) {
    throw ConfigError(fmt::format(
        "batchnorm: train mode needs n*h*w >= 2, got shape {}", s.str()));
  }
  const Tensor4& gv = tape.value(gamma);
  const Tensor4& bv = tape.value(beta);
  require_same_shape(gv.shape(), Shape4{1, s.c, 1, 1}, "batchnorm gamma");
  require_same_shape(bv.shape(), Shape4{1, s.c, 1, 1}, "batchnorm beta");
  if (state.running_mean.size() != s.c || state.running_var.size() != s.c) {
    throw ShapeError("batchnorm: running statistics size mismatch");
  }

  std::vector<double> mean(s.c), inv_std(s.c);
  if (mode == BnMode::kTrain) {
    for (std::size_t c = 0; c < s.c; ++c) {
      double acc = 0.0;
      for (std::size_t b = 0; b < s.n; ++b) {
        const double* p = &xv.data()[xv.index(b, c, 0, 0)];
        for (std::size_t i = 0; i < s.spatial(); ++i) acc += p[i];
      }
      const double m = acc / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t b = 0; b < s.n; ++b) {
        const double* p = &xv.data()[xv.index(b, c, 0, 0)];
        for (std::size_t i = 0; i < s.spatial(); ++i) {
          sq += (p[i] - m) * (p[i] - m);
        }
      }
      const double var = sq / static_cast<double>(count);
      mean[c] = m;
      inv_std[c] = 1.0 / std::sqrt(var + state.eps);
      if (update_stats) {
        const double unbiased = sq / static_cast<double>(count - 1);
        state.running_mean[c] =
            (1.0 - state.momentum) * state.running_mean[c] + state.momentum * m;
        state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] +
                               state.momentum * unbiased;
      }
    }
  } else {
    for (std::size_t c = 0; c < s.c; ++c) {
      if (!(state.running_var[c] > 0.0)) {
        throw ConfigError("batchnorm: running variance must be positive");
      }
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    }
  }

  Tensor4 out(s);
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = xv.index(b, c, 0, 0);
      for (std::size_t i = 0; i < s.spatial(); ++i) {
        out[base + i] =
            gv[c] * ((xv[base + i] - mean[c]) * inv_std[c]) + bv[c];
      }
    }
  }

  const bool train = mode == BnMode::kTrain;
  return tape.record(
      std::move(out), {x, gamma, beta},
      [=](Tape& t, const Tensor4& gout) {
        const Tensor4& xv = t.value(x);
        const Tensor4& gv = t.value(gamma);
        Tensor4* gx = t.grad_buffer(x);
        Tensor4* gg = t.grad_buffer(gamma);
        Tensor4* gb = t.grad_buffer(beta);
        const double nc = static_cast<double>(count);
        for (std::size_t c = 0; c < s.c; ++c) {
          double sum_dy = 0.0;
          double sum_dy_xhat = 0.0;
          for (std::size_t b = 0; b < s.n; ++b) {
            const std::size_t base = xv.index(b, c, 0, 0);
            for (std::size_t i = 0; i < s.spatial(); ++i) {
              const double xhat = (xv[base + i] - mean[c]) * inv_std[c];
              sum_dy += gout[base + i];
              sum_dy_xhat += gout[base + i] * xhat;
            }
          }
          if (gg != nullptr) (*gg)[c] += sum_dy_xhat;
          if (gb != nullptr) (*gb)[c] += sum_dy;
          if (gx == nullptr) continue;
          for (std::size_t b = 0; b < s.n; ++b) {
            const std::size_t base = xv.index(b, c, 0, 0);
            for (std::size_t i = 0; i < s.spatial(); ++i) {
              if (train) {
                const double xhat = (xv[base + i] - mean[c]) * inv_std[c];
                (*gx)[base + i] += gv[c] * inv_std[c] / nc *
                                   (nc * gout[base + i] - sum_dy -
                                    xhat * sum_dy_xhat);
              } else {
                (*gx)[base + i] += gv[c] * inv_std[c] * gout[base + i];
              }
            }
          }
        }
      });
}

Var batchnorm(Tape& tape, Var x, BatchNormParams& state, BnMode mode,
              bool update_stats) {
  Var g = tape.parameter(state.gamma);
  Var b = tape.parameter(state.beta);
  return batchnorm(tape, x, g, b, state, mode, update_stats);
}

Var relu(Tape& tape, Var x) {
  const Tensor4& xv = tape.value(x);
  Tensor4 out(xv.shape());
  std::uint64_t pattern = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    out[i] = std::max(0.0, xv[i]);
    pattern = (pattern ^ (xv[i] > 0.0 ? 1u : 0u)) * 0x100000001b3ULL;
  }
  tape.mix_kink_signature(pattern);
  return tape.record(std::move(out), {x}, [x](Tape& t, const Tensor4& gout) {
    const Tensor4& xv = t.value(x);
    Tensor4* gx = t.grad_buffer(x);
    if (gx == nullptr) return;
    for (std::size_t i = 0; i < xv.numel(); ++i) {
      if (xv[i] > 0.0) (*gx)[i] += gout[i];
    }
  });
}

Var add(Tape& tape, Var a, Var b) {
  const Tensor4& av = tape.value(a);
  const Tensor4& bv = tape.value(b);
  require_same_shape(av.shape(), bv.shape(), "add");
  Tensor4 out(av.shape());
  for (std::size_t i = 0; i < av.numel(); ++i) out[i] = av[i] + bv[i];
  return tape.record(std::move(out), {a, b},
                     [a, b](Tape& t, const Tensor4& gout) {
                       t.accumulate(a, gout);
                       t.accumulate(b, gout);
                     });
}

Var mul_channel_broadcast(Tape& tape, Var x, Var mask) {
  const Tensor4& xv = tape.value(x);
  const Tensor4& mv = tape.value(mask);
  const Shape4 s = xv.shape();
  const Shape4 ms = mv.shape();
  if (ms.c != 1 || ms.n != s.n || ms.h != s.h || ms.w != s.w) {
    throw ShapeError(fmt::format(
        "mul_channel_broadcast: mask {} does not broadcast over {}", ms.str(),
        s.str()));
  }
  Tensor4 out(s);
  for (std::size_t b = 0; b < s.n; ++b) {
    const double* m = &mv.data()[mv.index(b, 0, 0, 0)];
    for (std::size_t c = 0; c < s.c; ++c) {
      const std::size_t base = xv.index(b, c, 0, 0);
      for (std::size_t i = 0; i < s.spatial(); ++i) {
        out[base + i] = xv[base + i] * m[i];
      }
    }
  }
  return tape.record(
      std::move(out), {x, mask}, [x, mask, s](Tape& t, const Tensor4& gout) {
        const Tensor4& xv = t.value(x);
        const Tensor4& mv = t.value(mask);
        Tensor4* gx = t.grad_buffer(x);
        Tensor4* gm = t.grad_buffer(mask);
        for (std::size_t b = 0; b < s.n; ++b) {
          const std::size_t mbase = mv.index(b, 0, 0, 0);
          for (std::size_t c = 0; c < s.c; ++c) {
            const std::size_t base = xv.index(b, c, 0, 0);
            for (std::size_t i = 0; i < s.spatial(); ++i) {
              if (gx != nullptr) (*gx)[base + i] += gout[base + i] * mv[mbase + i];
              if (gm != nullptr) (*gm)[mbase + i] += gout[base + i] * xv[base + i];
            }
          }
        }
      });
}

Var concat_channels(Tape& tape, std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const Shape4 first = shape_of(tape, parts[0]);
  std::size_t channels = 0;
  for (Var p : parts) {
    const Shape4& s = shape_of(tape, p);
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError(fmt::format("concat_channels: {} does not match {}",
                                   s.str(), first.str()));
    }
    channels += s.c;
  }
  Tensor4 out(Shape4{first.n, channels, first.h, first.w});
  const std::size_t plane = first.spatial();
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (Var p : parts) {
    const Tensor4& v = tape.value(p);
    offsets.push_back(offset);
    for (std::size_t b = 0; b < first.n; ++b) {
      std::copy_n(&v.data()[v.index(b, 0, 0, 0)], v.shape().c * plane,
                  &out.data()[out.index(b, offset, 0, 0)]);
    }
    offset += v.shape().c;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape.record(
      std::move(out), inputs,
      [inputs, offsets, first, channels](Tape& t, const Tensor4& gout) {
        const std::size_t plane = first.spatial();
        for (std::size_t k = 0; k < inputs.size(); ++k) {
          Tensor4* g = t.grad_buffer(inputs[k]);
          if (g == nullptr) continue;
          const std::size_t ck = g->shape().c;
          for (std::size_t b = 0; b < first.n; ++b) {
            const double* src =
                &gout.data()[(b * channels + offsets[k]) * plane];
            double* dst = &g->data()[g->index(b, 0, 0, 0)];
            for (std::size_t i = 0; i < ck * plane; ++i) dst[i] += src[i];
          }
        }
      });
}

std::vector<Var> split_channels(Tape& tape, Var x,
                                std::span<const std::size_t> sizes) {
  const Shape4 s = shape_of(tape, x);
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(),
                                            std::size_t{0});
  if (total != s.c) {
    throw ShapeError(fmt::format(
        "split_channels: sizes sum to {}, input has {} channels", total, s.c));
  }
  std::vector<Var> parts;
  std::size_t offset = 0;
  const std::size_t plane = s.spatial();
  for (std::size_t size : sizes) {
    const Tensor4& xv = tape.value(x);
    Tensor4 out(Shape4{s.n, size, s.h, s.w});
    for (std::size_t b = 0; b < s.n; ++b) {
      std::copy_n(&xv.data()[xv.index(b, offset, 0, 0)], size * plane,
                  &out.data()[out.index(b, 0, 0, 0)]);
    }
    parts.push_back(tape.record(
        std::move(out), {x},
        [x, offset, size, s](Tape& t, const Tensor4& gout) {
          Tensor4* g = t.grad_buffer(x);
          if (g == nullptr) return;
          const std::size_t plane = s.spatial();
          for (std::size_t b = 0; b < s.n; ++b) {
            const double* src = &gout.data()[b * size * plane];
            double* dst = &g->data()[g->index(b, offset, 0, 0)];
            for (std::size_t i = 0; i < size * plane; ++i) dst[i] += src[i];
          }
        }));
    offset += size;
  }
  return parts;
}

Var sum(Tape& tape, Var x) {
  const Tensor4& xv = tape.value(x);
  double acc = 0.0;
  for (double v : xv.data()) acc += v;
  return tape.record(Tensor4::scalar(acc), {x},
                     [x](Tape& t, const Tensor4& gout) {
                       Tensor4* g = t.grad_buffer(x);
                       if (g == nullptr) return;
                       const double d = gout[0];
                       for (double& v : g->data()) v += d;
                     });
}

Var dot(Tape& tape, Var x, const Tensor4& weights) {
  const Tensor4& xv = tape.value(x);
  require_same_shape(xv.shape(), weights.shape(), "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < xv.numel(); ++i) acc += xv[i] * weights[i];
  return tape.record(Tensor4::scalar(acc), {x},
                     [x, weights](Tape& t, const Tensor4& gout) {
                       Tensor4* g = t.grad_buffer(x);
                       if (g == nullptr) return;
                       for (std::size_t i = 0; i < weights.numel(); ++i) {
                         (*g)[i] += gout[0] * weights[i];
                       }
                     });
}

Tensor4 softmax_channels(const Tensor4& logits) {
  const Shape4 s = logits.shape();
  Tensor4 out(s);
  const std::size_t plane = s.spatial();
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < s.c; ++c) {
        mx = std::max(mx, logits[(b * s.c + c) * plane + i]);
      }
      double z = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) {
        const double e = std::exp(logits[(b * s.c + c) * plane + i] - mx);
        out[(b * s.c + c) * plane + i] = e;
        z += e;
      }
      for (std::size_t c = 0; c < s.c; ++c) out[(b * s.c + c) * plane + i] /= z;
    }
  }
  return out;
}

CrossEntropy softmax_cross_entropy(Tape& tape, Var logits,
                                   std::span<const int> labels,
                                   int ignore_index) {
  const Tensor4& lv = tape.value(logits);
  const Shape4 s = lv.shape();
  const std::size_t plane = s.spatial();
  if (labels.size() != s.n * plane) {
    throw ShapeError(fmt::format(
        "softmax_cross_entropy: {} labels for logits {}", labels.size(),
        s.str()));
  }
  const int classes = static_cast<int>(s.c);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l != ignore_index && (l < 0 || l >= classes)) {
      throw ConfigError(fmt::format(
          "softmax_cross_entropy: label {} at pixel {} outside [0,{})", l, i,
          classes));
    }
  }

  Tensor4 prob = softmax_channels(lv);
  CrossEntropy result;
  result.true_class_prob = Tensor4(Shape4{s.n, 1, s.h, s.w}, 0.0);
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t b = 0; b < s.n; ++b) {
    for (std::size_t i = 0; i < plane; ++i) {
      const int l = labels[b * plane + i];
      if (l == ignore_index) continue;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < s.c; ++c) {
        mx = std::max(mx, lv[(b * s.c + c) * plane + i]);
      }
      double z = 0.0;
      for (std::size_t c = 0; c < s.c; ++c) {
        z += std::exp(lv[(b * s.c + c) * plane + i] - mx);
      }
      const double log_p =
          lv[(b * s.c + static_cast<std::size_t>(l)) * plane + i] - mx -
          std::log(z);
      total -= log_p;
      ++counted;
      result.true_class_prob[b * plane + i] =
          prob[(b * s.c + static_cast<std::size_t>(l)) * plane + i];
    }
  }
  result.counted = counted;
  result.all_ignored = counted == 0;
  const double loss = counted == 0 ? 0.0 : total / static_cast<double>(counted);

  std::vector<int> kept(labels.begin(), labels.end());
  result.loss = tape.record(
      Tensor4::scalar(loss), {logits},
      [logits, kept = std::move(kept), prob = std::move(prob), s, counted,
       ignore_index](Tape& t, const Tensor4& gout) {
        Tensor4* g = t.grad_buffer(logits);
        if (g == nullptr || counted == 0) return;
        const double scale = gout[0] / static_cast<double>(counted);
        const std::size_t plane = s.spatial();
        for (std::size_t b = 0; b < s.n; ++b) {
          for (std::size_t i = 0; i < plane; ++i) {
            const int l = kept[b * plane + i];
            if (l == ignore_index) continue;
            for (std::size_t c = 0; c < s.c; ++c) {
              const std::size_t idx = (b * s.c + c) * plane + i;
              const double onehot = static_cast<int>(c) == l ? 1.0 : 0.0;
              (*g)[idx] += scale * (prob[idx] - onehot);
            }
          }
        }
      });
  return result;
}

}  // namespace gpsnet
