#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "gpsnet/errors.hpp"
#include "gpsnet/training.hpp"

namespace gpsnet {
namespace {

// Raw engine output only, so the data is identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo + 1);
    return lo + static_cast<int>(engine_() % span);
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

 private:
  std::mt19937_64 engine_;
};

constexpr std::array<std::array<double, 3>, 8> kPalette{{
    {0.5, 0.5, 0.5},
    {0.9, 0.15, 0.15},
    {0.15, 0.8, 0.2},
    {0.2, 0.25, 0.9},
    {0.95, 0.9, 0.2},
    {0.85, 0.2, 0.85},
    {0.15, 0.85, 0.9},
    {0.05, 0.05, 0.05},
}};

constexpr int kShapesPerImage = 3;
constexpr double kNoise = 0.04;
constexpr double kTexture = 0.12;

struct Shape {
  bool disc = false;
  int cx = 0;
  int cy = 0;
  int rx = 0;
  int ry = 0;
  int cls = 0;

  bool covers(int x, int y) const {
    const int dx = x - cx;
    const int dy = y - cy;
    if (disc) return dx * dx + dy * dy <= rx * rx;
    return std::abs(dx) <= rx && std::abs(dy) <= ry;
  }
};

}  // namespace

SyntheticDataset gen_synthetic_dataset(std::uint64_t seed,
                                       std::size_t n_images, std::size_t size,
                                       int n_classes) {
  if (n_classes < 2 || n_classes > static_cast<int>(kPalette.size())) {
    throw ConfigError(fmt::format("synthetic data: classes {} outside [2, {}]",
                                  n_classes, kPalette.size()));
  }
  if (size < 4) {
    throw ConfigError(fmt::format("synthetic data: size {} < 4", size));
  }
  SyntheticDataset data;
  data.size = size;
  data.classes = n_classes;
  Rng rng(seed);
  const int s = static_cast<int>(size);
  const int max_radius = s / 2;

  for (std::size_t i = 0; i < n_images; ++i) {
    std::array<double, 3> fx{}, fy{}, phase{};
    for (int c = 0; c < 3; ++c) {
      fx[c] = rng.uniform(0.2, 1.2);
      fy[c] = rng.uniform(0.2, 1.2);
      phase[c] = rng.uniform(0.0, 6.283185307179586);
    }
    std::vector<Shape> shapes;
    for (int j = 0; j < kShapesPerImage; ++j) {
      Shape sh;
      sh.cls = 1 + static_cast<int>((i + static_cast<std::size_t>(j)) %
                                    static_cast<std::size_t>(n_classes - 1));
      sh.disc = rng.unit() < 0.5;
      const int r = rng.uniform_int(2, max_radius);
      sh.rx = r;
      sh.ry = sh.disc ? r : rng.uniform_int(2, r);
      if (!sh.disc && rng.unit() < 0.5) std::swap(sh.rx, sh.ry);
      sh.cx = rng.uniform_int(0, s - 1);
      sh.cy = rng.uniform_int(0, s - 1);
      shapes.push_back(sh);
    }
    // Large shapes first so small ones stay visible.
    std::stable_sort(shapes.begin(), shapes.end(),
                     [](const Shape& a, const Shape& b) {
                       return std::max(a.rx, a.ry) > std::max(b.rx, b.ry);
                     });

    Tensor4 image(Shape4{1, 3, size, size});
    std::vector<int> labels(size * size, 0);
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        int cls = 0;
        for (const Shape& sh : shapes) {
          if (sh.covers(x, y)) cls = sh.cls;
        }
        const std::size_t p = static_cast<std::size_t>(y * s + x);
        labels[p] = cls;
        for (std::size_t c = 0; c < 3; ++c) {
          double v = kPalette[static_cast<std::size_t>(cls)][c];
          if (cls == 0) {
            v += kTexture * std::sin(fx[c] * x + fy[c] * y + phase[c]);
          }
          v += rng.uniform(-kNoise, kNoise);
          image[c * size * size + p] = v;
        }
      }
    }
    data.images.push_back(std::move(image));
    data.labels.push_back(std::move(labels));
  }
  return data;
}

}  // namespace gpsnet
