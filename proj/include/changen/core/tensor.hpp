#pragma once

#include <vector>

#include <torch/torch.h>

#include "changen/core/types.hpp"

namespace changen {

/// [H, W] int64 label tensor.
torch::Tensor to_tensor(const SemanticMask& mask);
SemanticMask mask_from_tensor(const torch::Tensor& labels, int class_count);

/// Stacks masks into [N, H, W] int64; all masks must share a size.
torch::Tensor stack_masks(const std::vector<SemanticMask>& masks);
/// Stacks images into [N, 3, H, W] float32.
torch::Tensor stack_images(const std::vector<ImageArray>& images);

/// [N, H, W] labels -> [N, C, H, W] float one-hot with the requested dtype.
torch::Tensor one_hot(const torch::Tensor& labels, int class_count,
                      torch::Dtype dtype = torch::kFloat32);

/// Nearest-neighbour resize of an [N, C, H, W] tensor to (height, width).
torch::Tensor resize_nearest(const torch::Tensor& x, int height, int width);

/// Nearest-neighbour resize of [N, H, W] integer labels.
torch::Tensor resize_labels(const torch::Tensor& labels, int height, int width);

}  // namespace changen
