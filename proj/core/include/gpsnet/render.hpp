#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "gpsnet/netspec.hpp"
#include "gpsnet/samples.hpp"
#include "gpsnet/tensor.hpp"

namespace gpsnet {

struct RenderedFile {
  std::string name;
  std::string bytes;
};

// "dx,dy" header, one row per offset in set order.
std::string samples_csv(const SamplePositionSet& set);

// Binary graymap (P5) over `frame`, rows top (min dy) to bottom; sampled
// cells are 255, everything else 0.
std::string samples_pgm(const SamplePositionSet& set, const BoundingBox& frame);

// Binary graymap of an (h, w) plane. Values are min-max normalised to
// [0, 255]; a constant plane renders as 0.
std::string plane_pgm(const std::vector<double>& plane, std::size_t h,
                      std::size_t w);

// CSV and PGM for the union and every branch of a graph, all on the union's
// frame: <stem>.union.{csv,pgm}, <stem>.branch<b>.{csv,pgm}.
std::vector<RenderedFile> render_samples(const GraphSpec& graph,
                                         std::string_view stem);

}  // namespace gpsnet
