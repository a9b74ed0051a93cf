#include "changen/core/tiling.hpp"

#include <string>

#include "changen/core/error.hpp"
#include "changen/core/tensor.hpp"

namespace changen {

std::vector<int> tile_origins(int extent, int size, int stride) {
  if (size < 1 || stride < 1) throw ValidationError("tile size and stride must be positive");
  if (size > extent) {
    throw ValidationError("tile size " + std::to_string(size) + " exceeds extent " +
                          std::to_string(extent));
  }
  std::vector<int> origins;
  int o = 0;
  for (; o + size <= extent; o += stride) origins.push_back(o);
  if (origins.back() + size < extent) origins.push_back(extent - size);
  return origins;
}

std::vector<Tile> tile(const ImageArray& image, const SemanticMask& mask, int size, int stride) {
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw ShapeError("image and mask sizes differ");
  }
  const auto rows = tile_origins(image.height(), size, stride);
  const auto cols = tile_origins(image.width(), size, stride);
  const auto labels = to_tensor(mask);
  std::vector<Tile> tiles;
  tiles.reserve(rows.size() * cols.size());
  for (int r : rows) {
    for (int c : cols) {
      auto img = image.tensor().slice(1, r, r + size).slice(2, c, c + size).clone();
      auto lab = labels.slice(0, r, r + size).slice(1, c, c + size).contiguous();
      tiles.push_back(Tile{ImageArray(img), mask_from_tensor(lab, mask.class_count()), r, c});
    }
  }
  return tiles;
}

std::pair<ImageArray, SemanticMask> untile(const std::vector<Tile>& tiles, int height, int width) {
  if (tiles.empty()) throw ValidationError("no tiles to reassemble");
  auto canvas = torch::zeros({3, height, width});
  auto labels = torch::zeros({height, width}, torch::kInt64);
  auto covered = torch::zeros({height, width}, torch::kBool);
  for (const auto& t : tiles) {
    const int h = t.image.height();
    const int w = t.image.width();
    if (t.row < 0 || t.col < 0 || t.row + h > height || t.col + w > width) {
      throw ShapeError("tile at (" + std::to_string(t.row) + "," + std::to_string(t.col) +
                       ") falls outside the canvas");
    }
    canvas.slice(1, t.row, t.row + h).slice(2, t.col, t.col + w).copy_(t.image.tensor());
    labels.slice(0, t.row, t.row + h).slice(1, t.col, t.col + w).copy_(to_tensor(t.mask));
    covered.slice(0, t.row, t.row + h).slice(1, t.col, t.col + w).fill_(true);
  }
  if (!covered.all().item<bool>()) throw ValidationError("tiles do not cover the canvas");
  return {ImageArray(canvas), mask_from_tensor(labels, tiles.front().mask.class_count())};
}

}  // namespace changen
