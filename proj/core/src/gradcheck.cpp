#include "gpsnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "gpsnet/errors.hpp"
#include "gpsnet/optim.hpp"

namespace gpsnet {
namespace {

// Random permutation prefix of [0, numel) of length min(k, numel).
std::vector<std::size_t> candidate_indices(std::size_t numel, std::size_t k,
                                           std::mt19937_64& rng) {
  std::vector<std::size_t> idx(numel);
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t take = std::min(k, numel);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (numel - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(take);
  return idx;
}

struct Eval {
  double value = 0.0;
  std::uint64_t signature = 0;
};

Eval evaluate(const LossBuilder& build) {
  Tape tape;
  const double v = tape.value(build(tape)).item();
  return Eval{v, tape.kink_signature()};
}

}  // namespace

Tensor4 random_tensor(Shape4 shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor4 t(shape);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

GradcheckReport gradcheck(const LossBuilder& build,
                          const std::vector<NamedTensor>& blocks,
                          const GradcheckOptions& opts) {
  if (!(opts.step > 0.0)) throw ConfigError("gradcheck: step must be > 0");
  std::vector<Tensor4> analytic;
  std::uint64_t base_signature = 0;
  {
    Tape tape;
    Var loss = build(tape);
    base_signature = tape.kink_signature();
    tape.backward(loss);
    for (const NamedTensor& b : blocks) {
      std::optional<Tensor4> g = tape.grad_of(*b.tensor);
      analytic.push_back(g ? *g : Tensor4(b.tensor->shape()));
    }
  }

  double scale = 1.0;
  for (const Tensor4& g : analytic) {
    for (double v : g.data()) scale = std::max(scale, std::abs(v));
  }
  const double floor = opts.floor * scale;

  GradcheckReport report;
  std::mt19937_64 rng(opts.seed);
  for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
    Tensor4& t = *blocks[bi].tensor;
    BlockCheck check;
    check.name = blocks[bi].name;
    const std::size_t budget = opts.samples_per_block * opts.max_attempts_factor;
    for (std::size_t i : candidate_indices(t.numel(), budget, rng)) {
      if (check.checked == opts.samples_per_block) break;
      const double saved = t[i];
      t[i] = saved + opts.step;
      const Eval plus = evaluate(build);
      t[i] = saved - opts.step;
      const Eval minus = evaluate(build);
      t[i] = saved;
      if (plus.signature != base_signature || minus.signature != base_signature) {
        ++check.skipped_kinks;
        continue;
      }
      const double numeric = (plus.value - minus.value) / (2.0 * opts.step);
      const double a = analytic[bi][i] * (1.0 + opts.corrupt);
      check.max_rel_error =
          std::max(check.max_rel_error, relative_error(a, numeric, floor));
      ++check.checked;
    }
    check.pass = check.max_rel_error < opts.tol;
    report.max_rel_error = std::max(report.max_rel_error, check.max_rel_error);
    report.pass = report.pass && check.pass;
    report.checked += check.checked;
    report.skipped_kinks += check.skipped_kinks;
    report.blocks.push_back(std::move(check));
  }
  return report;
}

GradcheckReport gradcheck_model(SuperNetModel& model, const Tensor4& input,
                                const GradcheckOptions& opts) {
  Tensor4 x = input;
  const Shape4 s = input.shape();
  const Tensor4 r = random_tensor(
      Shape4{s.n, model.head_channels(), s.h, s.w}, opts.seed + 17);
  const ForwardContext ctx{BnMode::kTrain, false};
  LossBuilder build = [&](Tape& tape) {
    Var in = tape.parameter(x);
    SuperNetOutput out = supernet_forward(tape, model, in, ctx);
    return dot(tape, out.features, r);
  };
  std::vector<NamedTensor> blocks{{"input", &x}};
  for (const NamedTensor& p : model.parameters()) blocks.push_back(p);
  return gradcheck(build, blocks, opts);
}

GradcheckReport gradcheck_gate(GateModule& gate, const Tensor4& x_v,
                               const Tensor4& x_h,
                               const GradcheckOptions& opts) {
  Tensor4 xv = x_v;
  Tensor4 xh = x_h;
  const Shape4 s = x_v.shape();
  const Tensor4 r_out = random_tensor(s, opts.seed + 1);
  const Tensor4 r_v = random_tensor(Shape4{s.n, 1, s.h, s.w}, opts.seed + 2);
  const Tensor4 r_h = random_tensor(Shape4{s.n, 1, s.h, s.w}, opts.seed + 3);
  const ForwardContext ctx{BnMode::kTrain, false};
  LossBuilder build = [&](Tape& tape) {
    GateOutput g =
        gate_forward(tape, gate, tape.parameter(xv), tape.parameter(xh), ctx);
    Var l = add(tape, dot(tape, g.out, r_out), dot(tape, g.mask_v, r_v));
    return add(tape, l, dot(tape, g.mask_h, r_h));
  };
  std::vector<NamedTensor> blocks{{"x_v", &xv}, {"x_h", &xh}};
  collect_parameters("gate.proj_v", gate.proj_v, blocks);
  collect_parameters("gate.proj_h", gate.proj_h, blocks);
  collect_parameters("gate.cmp", gate.cmp, blocks);
  return gradcheck(build, blocks, opts);
}

}  // namespace gpsnet
