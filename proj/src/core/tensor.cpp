#include "changen/core/tensor.hpp"

#include <string>

#include "changen/core/error.hpp"

namespace changen {

torch::Tensor to_tensor(const SemanticMask& mask) {
  auto labels = mask.labels();
  return torch::from_blob(const_cast<Label*>(labels.data()), {mask.height(), mask.width()},
                          torch::kUInt8)
      .to(torch::kInt64);
}

SemanticMask mask_from_tensor(const torch::Tensor& labels, int class_count) {
  if (labels.dim() != 2) throw ShapeError("mask tensor must be [H, W]");
  auto bytes = labels.to(torch::kCPU).to(torch::kUInt8).contiguous();
  const auto* p = bytes.data_ptr<std::uint8_t>();
  return SemanticMask(static_cast<int>(labels.size(0)), static_cast<int>(labels.size(1)),
                      class_count, std::vector<Label>(p, p + bytes.numel()));
}

torch::Tensor stack_masks(const std::vector<SemanticMask>& masks) {
  std::vector<torch::Tensor> parts;
  parts.reserve(masks.size());
  for (const auto& m : masks) parts.push_back(to_tensor(m));
  return torch::stack(parts);
}

torch::Tensor stack_images(const std::vector<ImageArray>& images) {
  std::vector<torch::Tensor> parts;
  parts.reserve(images.size());
  for (const auto& im : images) parts.push_back(im.tensor());
  return torch::stack(parts);
}

torch::Tensor one_hot(const torch::Tensor& labels, int class_count, torch::Dtype dtype) {
  if (labels.dim() != 3) throw ShapeError("one_hot expects [N, H, W] labels");
  return torch::one_hot(labels.to(torch::kInt64), class_count).permute({0, 3, 1, 2}).to(dtype);
}

torch::Tensor resize_nearest(const torch::Tensor& x, int height, int width) {
  if (x.size(2) == height && x.size(3) == width) return x;
  namespace F = torch::nn::functional;
  return F::interpolate(x, F::InterpolateFuncOptions()
                               .size(std::vector<std::int64_t>{height, width})
                               .mode(torch::kNearest));
}

torch::Tensor resize_labels(const torch::Tensor& labels, int height, int width) {
  if (labels.size(1) == height && labels.size(2) == width) return labels;
  auto as_float = labels.unsqueeze(1).to(torch::kFloat32);
  return resize_nearest(as_float, height, width).squeeze(1).round().to(labels.scalar_type());
}

}  // namespace changen
