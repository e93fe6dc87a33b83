#include "gpsnet/samples.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "gpsnet/errors.hpp"

namespace gpsnet {

SamplePositionSet SamplePositionSet::origin() {
  SamplePositionSet s;
  s.offsets_.push_back(Offset{0, 0});
  return s;
}

SamplePositionSet SamplePositionSet::from_offsets(std::vector<Offset> offsets) {
  std::sort(offsets.begin(), offsets.end());
  offsets.erase(std::unique(offsets.begin(), offsets.end()), offsets.end());
  SamplePositionSet s;
  s.offsets_ = std::move(offsets);
  return s;
}

bool SamplePositionSet::contains(Offset o) const {
  return std::binary_search(offsets_.begin(), offsets_.end(), o);
}

BoundingBox SamplePositionSet::bbox() const {
  if (offsets_.empty()) throw UsageError("bbox() of an empty sample set");
  BoundingBox b{offsets_.front().dx, offsets_.back().dx, offsets_.front().dy,
                offsets_.front().dy};
  for (const Offset& o : offsets_) {
    b.min_y = std::min(b.min_y, o.dy);
    b.max_y = std::max(b.max_y, o.dy);
  }
  return b;
}

int SamplePositionSet::side() const {
  const BoundingBox b = bbox();
  return std::max(b.width(), b.height());
}

SamplePositionSet SamplePositionSet::dilated(int kernel, int dilation) const {
  if (kernel < 1 || kernel % 2 == 0) {
    throw ConfigError(fmt::format("dilated(): kernel {} unsupported", kernel));
  }
  const int half = (kernel - 1) / 2;
  std::vector<Offset> out;
  out.reserve(offsets_.size() * static_cast<std::size_t>(kernel * kernel));
  for (const Offset& o : offsets_) {
    for (int i = -half; i <= half; ++i) {
      for (int j = -half; j <= half; ++j) {
        out.push_back(Offset{o.dx + j * dilation, o.dy + i * dilation});
      }
    }
  }
  return from_offsets(std::move(out));
}

SamplePositionSet SamplePositionSet::united(
    const SamplePositionSet& other) const {
  std::vector<Offset> out;
  out.reserve(offsets_.size() + other.offsets_.size());
  std::set_union(offsets_.begin(), offsets_.end(), other.offsets_.begin(),
                 other.offsets_.end(), std::back_inserter(out));
  SamplePositionSet s;
  s.offsets_ = std::move(out);
  return s;
}

namespace {

// Square occupancy grid centred on the origin.
class Grid {
 public:
  explicit Grid(int radius)
      : radius_(radius),
        side_(2 * radius + 1),
        cells_(static_cast<std::size_t>(side_) * side_, 0) {}

  void set(int dx, int dy) { cells_[index(dx, dy)] = 1; }

  void unite(const Grid& other) {
    for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] |= other.cells_[i];
  }

  // this ⊕ {-half..half}^2 * dilation
  Grid dilated(int kernel, int dilation) const {
    Grid out(radius_);
    const int half = (kernel - 1) / 2;
    for (int i = -half; i <= half; ++i) {
      const int sy = i * dilation;
      for (int j = -half; j <= half; ++j) {
        const int sx = j * dilation;
        for (int y = -radius_; y <= radius_; ++y) {
          const int ty = y + sy;
          if (ty < -radius_ || ty > radius_) continue;
          const std::uint8_t* src = &cells_[index(-radius_, y)];
          std::uint8_t* dst = &out.cells_[index(-radius_, ty)];
          const int lo = std::max(-radius_, -radius_ - sx);
          const int hi = std::min(radius_, radius_ - sx);
          for (int x = lo; x <= hi; ++x) {
            dst[x + sx + radius_] |= src[x + radius_];
          }
        }
      }
    }
    return out;
  }

  SamplePositionSet to_set() const {
    std::vector<Offset> out;
    for (int dx = -radius_; dx <= radius_; ++dx) {
      for (int dy = -radius_; dy <= radius_; ++dy) {
        if (cells_[index(dx, dy)] != 0) out.push_back(Offset{dx, dy});
      }
    }
    return SamplePositionSet::from_offsets(std::move(out));
  }

 private:
  std::size_t index(int dx, int dy) const {
    return static_cast<std::size_t>(dy + radius_) * side_ +
           static_cast<std::size_t>(dx + radius_);
  }

  int radius_;
  int side_;
  std::vector<std::uint8_t> cells_;
};

}  // namespace

SampleEnumeration enumerate_samples(const GraphSpec& graph) {
  require_valid(graph);
  for (const NodeSpec& n : graph.nodes) {
    if (is_conv(n.kind) && n.kernel != 1 && n.kernel != 3) {
      throw ConfigError(fmt::format(
          "enumerate_samples: node '{}' has unsupported kernel {}", n.id,
          n.kernel));
    }
  }
  const int radius = longest_dilation_path(graph);
  std::map<std::string, Grid> grids;
  std::map<int, Grid> branch_grids;
  SampleEnumeration result;

  for (const std::string& id : topological_order(graph)) {
    const NodeSpec& n = graph.node(id);
    Grid g(radius);
    if (n.kind == NodeKind::kEntrance) {
      g.set(0, 0);
    } else {
      for (const EdgeSpec* e : graph.incoming(id)) g.unite(grids.at(e->from));
      if (n.kind == NodeKind::kAtrous3x3) g = g.dilated(n.kernel, n.dilation);
    }
    if (n.branch > 0) {
      auto [it, fresh] = branch_grids.try_emplace(n.branch, radius);
      it->second.unite(g);
    }
    if (n.kind == NodeKind::kExit) result.exits.emplace(id, g.to_set());
    grids.emplace(id, std::move(g));
  }

  for (const auto& [id, set] : result.exits) {
    result.exit_union = result.exit_union.united(set);
  }
  for (const auto& [b, grid] : branch_grids) {
    auto set = grid.to_set();
    result.branch_union = result.branch_union.united(set);
    result.branches.emplace(b, std::move(set));
  }
  if (branch_grids.empty()) result.branch_union = result.exit_union;
  return result;
}

}  // namespace gpsnet
