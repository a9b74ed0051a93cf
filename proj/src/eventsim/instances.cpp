#include "changen/eventsim/instances.hpp"

#include <algorithm>
#include <climits>

namespace changen::eventsim {

Instance make_instance(Label label, std::vector<Pixel> pixels) {
  std::sort(pixels.begin(), pixels.end());
  Instance inst{label, std::move(pixels), {}};
  if (inst.pixels.empty()) return inst;
  BoundingBox b{INT_MAX, INT_MAX, INT_MIN, INT_MIN};
  for (const auto& p : inst.pixels) {
    b.r0 = std::min(b.r0, p.row);
    b.c0 = std::min(b.c0, p.col);
    b.r1 = std::max(b.r1, p.row + 1);
    b.c1 = std::max(b.c1, p.col + 1);
  }
  inst.bbox = b;
  return inst;
}

std::vector<Instance> extract_instances(const SemanticMask& mask, Connectivity connectivity) {
  const int h = mask.height();
  const int w = mask.width();
  std::vector<char> visited(mask.size(), 0);
  std::vector<Instance> out;
  std::vector<Pixel> stack;

  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Label label = mask.at(r, c);
      if (label == kBackground || visited[static_cast<std::size_t>(r) * w + c]) continue;
      std::vector<Pixel> pixels;
      stack.assign(1, Pixel{r, c});
      visited[static_cast<std::size_t>(r) * w + c] = 1;
      while (!stack.empty()) {
        const Pixel p = stack.back();
        stack.pop_back();
        pixels.push_back(p);
        for (int dr = -1; dr <= 1; ++dr) {
          for (int dc = -1; dc <= 1; ++dc) {
            if (dr == 0 && dc == 0) continue;
            if (connectivity == Connectivity::Four && dr != 0 && dc != 0) continue;
            const int rr = p.row + dr;
            const int cc = p.col + dc;
            if (!mask.contains(rr, cc)) continue;
            auto& seen = visited[static_cast<std::size_t>(rr) * w + cc];
            if (seen || mask.at(rr, cc) != label) continue;
            seen = 1;
            stack.push_back(Pixel{rr, cc});
          }
        }
      }
      out.push_back(make_instance(label, std::move(pixels)));
    }
  }
  return out;
}

}  // namespace changen::eventsim
