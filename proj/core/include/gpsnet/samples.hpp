#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "gpsnet/netspec.hpp"

namespace gpsnet {

// Integer input offset relative to the output position.
struct Offset {
  int dx = 0;
  int dy = 0;

  friend auto operator<=>(const Offset&, const Offset&) = default;
};

struct BoundingBox {
  int min_x = 0;
  int max_x = 0;
  int min_y = 0;
  int max_y = 0;

  int width() const { return max_x - min_x + 1; }
  int height() const { return max_y - min_y + 1; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

// Sorted, duplicate-free set of offsets.
class SamplePositionSet {
 public:
  SamplePositionSet() = default;
  static SamplePositionSet origin();
  static SamplePositionSet from_offsets(std::vector<Offset> offsets);

  const std::vector<Offset>& offsets() const { return offsets_; }
  std::size_t size() const { return offsets_.size(); }
  bool empty() const { return offsets_.empty(); }
  bool contains(Offset o) const;

  // Throws UsageError on an empty set.
  BoundingBox bbox() const;
  // Side of the square support: max(width, height).
  int side() const;

  // S ⊕ taps of a k x k kernel with dilation r (k odd).
  SamplePositionSet dilated(int kernel, int dilation) const;
  SamplePositionSet united(const SamplePositionSet& other) const;

  friend bool operator==(const SamplePositionSet&,
                         const SamplePositionSet&) = default;

 private:
  std::vector<Offset> offsets_;
};

struct SampleEnumeration {
  std::map<std::string, SamplePositionSet> exits;
  // P_b: union over every node tagged with branch b.
  std::map<int, SamplePositionSet> branches;
  // Union of all P_b; equals the exit union when the graph has no branch
  // tags.
  SamplePositionSet branch_union;
  // Union of all exit sets.
  SamplePositionSet exit_union;
};

// Walks the graph from {(0,0)} at every entrance: atrous k x k nodes apply
// S ⊕ {-r, 0, r}^2, 1x1 convs and merges pass sets through, merges take the
// union of their inputs. Gates are transparent. Requires a valid graph.
SampleEnumeration enumerate_samples(const GraphSpec& graph);

}  // namespace gpsnet
