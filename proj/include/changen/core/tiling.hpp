#pragma once

#include <vector>

#include "changen/core/types.hpp"

namespace changen {

struct Tile {
  ImageArray image;
  SemanticMask mask;
  int row = 0;
  int col = 0;
};

/// Tile origins along one axis: 0, stride, 2*stride ... plus a final origin flush with
/// the far edge when the grid does not land on it.
std::vector<int> tile_origins(int extent, int size, int stride);

/// Cuts image and mask into size x size tiles. With stride == size the tiles partition
/// the pixel grid whenever size divides the extent.
std::vector<Tile> tile(const ImageArray& image, const SemanticMask& mask, int size, int stride);

/// Reassembles tiles onto a height x width canvas; later tiles overwrite earlier ones.
std::pair<ImageArray, SemanticMask> untile(const std::vector<Tile>& tiles, int height, int width);

}  // namespace changen
