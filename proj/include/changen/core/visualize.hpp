#pragma once

#include <filesystem>
#include <vector>

#include <torch/torch.h>

#include "changen/core/types.hpp"

namespace changen {

/// Fixed palette rendering of labels [H, W] as an RGB tensor [3, H, W] in [-1, 1].
torch::Tensor colorize_labels(const torch::Tensor& labels);

/// Writes rows of equally sized [3, H, W] tiles in [-1, 1] as one PNG with 2-pixel gutters.
void write_grid(const std::filesystem::path& path, const std::vector<std::vector<torch::Tensor>>& rows);

/// Values in [0, 1] of shape [H, W] written as an 8-bit grayscale PNG.
void write_unit_map(const std::filesystem::path& path, const torch::Tensor& map);

}  // namespace changen
