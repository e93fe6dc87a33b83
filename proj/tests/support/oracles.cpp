#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "gpsnet/gpsnet.hpp"
#include "gpsnet/tape.hpp"

namespace oracle {

std::vector<int> Gen::distinct_rates(int count, int max_rate) {
  std::vector<int> rates;
  while (static_cast<int>(rates.size()) < count) {
    const int r = integer(1, max_rate);
    if (std::find(rates.begin(), rates.end(), r) == rates.end()) rates.push_back(r);
  }
  return rates;
}

Tensor4 naive_conv(const Tensor4& x, const Tensor4& w, const Tensor4* bias,
                   int dilation, int padding) {
  const Shape4 xs = x.shape();
  const Shape4 ws = w.shape();
  const int k = static_cast<int>(ws.h);
  const int H = static_cast<int>(xs.h);
  const int W = static_cast<int>(xs.w);
  const int oh = H + 2 * padding - dilation * (k - 1);
  const int ow = W + 2 * padding - dilation * (k - 1);
  Tensor4 out(Shape4{xs.n, ws.n, static_cast<std::size_t>(oh),
                     static_cast<std::size_t>(ow)});
  for (std::size_t n = 0; n < xs.n; ++n) {
    for (std::size_t o = 0; o < ws.n; ++o) {
      for (int y = 0; y < oh; ++y) {
        for (int xx = 0; xx < ow; ++xx) {
          double acc = bias ? (*bias)[o] : 0.0;
          for (std::size_t c = 0; c < ws.c; ++c) {
            for (int i = 0; i < k; ++i) {
              for (int j = 0; j < k; ++j) {
                const int iy = y - padding + i * dilation;
                const int ix = xx - padding + j * dilation;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += w.at(o, c, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) *
                       x.at(n, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
              }
            }
          }
          out.at(n, o, static_cast<std::size_t>(y), static_cast<std::size_t>(xx)) = acc;
        }
      }
    }
  }
  return out;
}

Tensor4 scalar_batchnorm(const Tensor4& x, const std::vector<double>& gamma,
                         const std::vector<double>& beta, double eps) {
  const Shape4 s = x.shape();
  Tensor4 out(s);
  const double count = static_cast<double>(s.n * s.h * s.w);
  for (std::size_t c = 0; c < s.c; ++c) {
    double mean = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) mean += x.at(n, c, h, w);
    mean /= count;
    double var = 0.0;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) {
          const double d = x.at(n, c, h, w) - mean;
          var += d * d;
        }
    var /= count;
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t h = 0; h < s.h; ++h)
        for (std::size_t w = 0; w < s.w; ++w) {
          out.at(n, c, h, w) =
              gamma[c] * (x.at(n, c, h, w) - mean) / std::sqrt(var + eps) + beta[c];
        }
  }
  return out;
}

double scalar_cross_entropy(const Tensor4& logits, const std::vector<int>& labels,
                            int ignore_index) {
  const Shape4 s = logits.shape();
  double total = 0.0;
  int count = 0;
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t h = 0; h < s.h; ++h) {
      for (std::size_t w = 0; w < s.w; ++w) {
        const int label = labels[(n * s.h + h) * s.w + w];
        if (label == ignore_index) continue;
        double denom = 0.0;
        for (std::size_t c = 0; c < s.c; ++c) denom += std::exp(logits.at(n, c, h, w));
        total += -std::log(std::exp(logits.at(n, static_cast<std::size_t>(label), h, w)) / denom);
        ++count;
      }
    }
  }
  return count == 0 ? 0.0 : total / count;
}

std::vector<std::size_t> brute_ohem(const std::vector<double>& prob,
                                    const std::vector<int>& labels,
                                    int ignore_index, double threshold,
                                    std::size_t min_keep) {
  std::vector<std::pair<double, std::size_t>> ranked;
  for (std::size_t i = 0; i < prob.size(); ++i) {
    if (labels[i] != ignore_index) ranked.emplace_back(prob[i], i);
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::size_t> hard;
  for (const auto& [p, i] : ranked) {
    if (p < threshold) hard.push_back(i);
  }
  const std::size_t keep = std::min(min_keep, ranked.size());
  std::vector<std::size_t> out;
  if (hard.size() >= keep) {
    out = hard;
  } else {
    for (std::size_t k = 0; k < keep; ++k) out.push_back(ranked[k].second);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::map<std::string, PointSet> set_enumerate(const GraphSpec& g) {
  std::map<std::string, PointSet> memo;
  std::function<const PointSet&(const std::string&)> visit =
      [&](const std::string& id) -> const PointSet& {
    if (auto it = memo.find(id); it != memo.end()) return it->second;
    const gpsnet::NodeSpec& n = g.node(id);
    PointSet in;
    if (n.kind == gpsnet::NodeKind::kEntrance) in.insert({0, 0});
    for (const gpsnet::EdgeSpec& e : g.edges) {
      if (e.to != id) continue;
      const PointSet& s = visit(e.from);
      in.insert(s.begin(), s.end());
    }
    PointSet out;
    if (n.kind == gpsnet::NodeKind::kAtrous3x3) {
      for (const Point& p : in)
        for (int i = -1; i <= 1; ++i)
          for (int j = -1; j <= 1; ++j)
            out.insert({p.first + i * n.dilation, p.second + j * n.dilation});
    } else {
      out = in;
    }
    return memo[id] = std::move(out);
  };
  for (const gpsnet::NodeSpec& n : g.nodes) visit(n.id);
  return memo;
}

PointSet exit_union(const GraphSpec& g) {
  const auto sets = set_enumerate(g);
  PointSet u;
  for (const gpsnet::NodeSpec& n : g.nodes) {
    if (n.kind == gpsnet::NodeKind::kExit) {
      const PointSet& s = sets.at(n.id);
      u.insert(s.begin(), s.end());
    }
  }
  return u;
}

PointSet branch_union(const GraphSpec& g) {
  const auto sets = set_enumerate(g);
  PointSet u;
  bool tagged = false;
  for (const gpsnet::NodeSpec& n : g.nodes) {
    if (n.branch > 0) {
      tagged = true;
      const PointSet& s = sets.at(n.id);
      u.insert(s.begin(), s.end());
    }
  }
  return tagged ? u : exit_union(g);
}

PointSet to_points(const gpsnet::SamplePositionSet& s) {
  PointSet out;
  for (const gpsnet::Offset& o : s.offsets()) out.insert({o.dx, o.dy});
  return out;
}

int side_of(const PointSet& s) {
  int min_x = 0, max_x = 0, min_y = 0, max_y = 0;
  bool first = true;
  for (const auto& [x, y] : s) {
    if (first) {
      min_x = max_x = x;
      min_y = max_y = y;
      first = false;
    }
    min_x = std::min(min_x, x);
    max_x = std::max(max_x, x);
    min_y = std::min(min_y, y);
    max_y = std::max(max_y, y);
  }
  return std::max(max_x - min_x, max_y - min_y) + 1;
}

GraphSpec random_dag(Gen& gen, std::size_t channels, int max_nodes, int max_rate) {
  using gpsnet::EdgeRole;
  using gpsnet::NodeKind;
  GraphSpec g;
  g.name = "random";
  g.nodes.push_back({"in", NodeKind::kEntrance, 0, 0, 0, channels, 0, 0});
  std::vector<std::string> producers{"in"};
  std::set<std::string> consumed;
  const int count = gen.integer(1, max_nodes);
  for (int i = 0; i < count; ++i) {
    const std::string id = "n" + std::to_string(i);
    std::string source = producers[static_cast<std::size_t>(
        gen.integer(0, static_cast<int>(producers.size()) - 1))];
    if (producers.size() >= 2 && gen.coin(0.4)) {
      const std::string other = producers[static_cast<std::size_t>(
          gen.integer(0, static_cast<int>(producers.size()) - 1))];
      if (other != source) {
        const std::string merge = "m" + std::to_string(i);
        g.nodes.push_back({merge, NodeKind::kSumMerge, 0, 0, 0, 0, 0, 0});
        g.edges.push_back({source, merge, EdgeRole::kHorizontal});
        g.edges.push_back({other, merge, EdgeRole::kHorizontal});
        consumed.insert(source);
        consumed.insert(other);
        source = merge;
      }
    }
    if (gen.coin(0.75)) {
      g.nodes.push_back({id, NodeKind::kAtrous3x3, 3, gen.integer(1, max_rate),
                         channels, channels, 0, 0});
    } else {
      g.nodes.push_back({id, NodeKind::kSqueeze1x1, 1, 0, channels, channels, 0, 0});
    }
    g.edges.push_back({source, id, EdgeRole::kHorizontal});
    consumed.insert(source);
    producers.push_back(id);
  }
  g.nodes.push_back({"out", NodeKind::kExit, 0, 0, 0, 0, 0, 0});
  for (const std::string& p : producers) {
    if (!consumed.count(p)) g.edges.push_back({p, "out", EdgeRole::kHorizontal});
  }
  return g;
}

PointSet impulse_support(const GraphSpec& g) {
  gpsnet::SuperNetModel m = gpsnet::SuperNetModel::create(g, 1, 0);
  gpsnet::make_impulse_probe(m);
  const int reach = gpsnet::longest_dilation_path(g);
  const std::size_t size = static_cast<std::size_t>(2 * reach + 3);
  const std::size_t c = size / 2;
  Tensor4 x(Shape4{1, m.in_channels(), size, size});
  for (std::size_t ch = 0; ch < m.in_channels(); ++ch) x.at(0, ch, c, c) = 1.0;
  gpsnet::Tape tape;
  const gpsnet::ForwardContext ctx{gpsnet::BnMode::kEval, false};
  const auto out = gpsnet::supernet_forward(tape, m, tape.constant(x), ctx);
  const Tensor4& e = tape.value(out.exit);
  PointSet support;
  for (std::size_t ch = 0; ch < e.shape().c; ++ch)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t xx = 0; xx < size; ++xx)
        if (e.at(0, ch, y, xx) != 0.0)
          support.insert({static_cast<int>(c) - static_cast<int>(xx),
                          static_cast<int>(c) - static_cast<int>(y)});
  return support;
}

}  // namespace oracle
