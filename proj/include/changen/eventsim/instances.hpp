#pragma once

#include <cstddef>
#include <vector>

#include "changen/core/types.hpp"

namespace changen::eventsim {

enum class Connectivity { Four, Eight };

/// Half-open box: rows [r0, r1), cols [c0, c1).
struct BoundingBox {
  int r0 = 0;
  int c0 = 0;
  int r1 = 0;
  int c1 = 0;

  int height() const { return r1 - r0; }
  int width() const { return c1 - c0; }
  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;
};

/// One maximal connected component of a single foreground label.
struct Instance {
  Label label = 0;
  std::vector<Pixel> pixels;  // sorted row-major
  BoundingBox bbox;

  std::size_t area() const { return pixels.size(); }
  friend bool operator==(const Instance&, const Instance&) = default;
};

/// Builds an instance from pixels, sorting them and computing the tight box.
Instance make_instance(Label label, std::vector<Pixel> pixels);

/// Every foreground pixel ends up in exactly one instance. Instances are ordered by
/// their first pixel in row-major scan order.
std::vector<Instance> extract_instances(const SemanticMask& mask,
                                        Connectivity connectivity = Connectivity::Eight);

}  // namespace changen::eventsim
