#include "gpsnet/render.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace gpsnet {

std::string samples_csv(const SamplePositionSet& set) {
  std::string out = "dx,dy\n";
  for (const Offset& o : set.offsets()) out += fmt::format("{},{}\n", o.dx, o.dy);
  return out;
}

std::string samples_pgm(const SamplePositionSet& set, const BoundingBox& frame) {
  const int w = frame.width();
  const int h = frame.height();
  std::string pixels(static_cast<std::size_t>(w) * h, '\0');
  for (const Offset& o : set.offsets()) {
    if (o.dx < frame.min_x || o.dx > frame.max_x || o.dy < frame.min_y ||
        o.dy > frame.max_y) {
      continue;
    }
    pixels[static_cast<std::size_t>(o.dy - frame.min_y) * w +
           static_cast<std::size_t>(o.dx - frame.min_x)] =
        static_cast<char>(255);
  }
  return fmt::format("P5\n{} {}\n255\n", w, h) + pixels;
}

std::string plane_pgm(const std::vector<double>& plane, std::size_t h,
                      std::size_t w) {
  std::string pixels(h * w, '\0');
  if (!plane.empty()) {
    const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
    const double range = *hi - *lo;
    if (range > 0.0) {
      for (std::size_t i = 0; i < h * w; ++i) {
        const double v = (plane[i] - *lo) / range;
        pixels[i] = static_cast<char>(
            static_cast<unsigned char>(std::lround(v * 255.0)));
      }
    }
  }
  return fmt::format("P5\n{} {}\n255\n", w, h) + pixels;
}

std::vector<RenderedFile> render_samples(const GraphSpec& graph,
                                         std::string_view stem) {
  const SampleEnumeration samples = enumerate_samples(graph);
  const BoundingBox frame = samples.branch_union.bbox();
  std::vector<RenderedFile> files;
  auto emit = [&](const std::string& tag, const SamplePositionSet& set) {
    files.push_back({fmt::format("{}.{}.csv", stem, tag), samples_csv(set)});
    files.push_back(
        {fmt::format("{}.{}.pgm", stem, tag), samples_pgm(set, frame)});
  };
  emit("union", samples.branch_union);
  for (const auto& [b, set] : samples.branches) {
    emit(fmt::format("branch{}", b), set);
  }
  return files;
}

}  // namespace gpsnet
