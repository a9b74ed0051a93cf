#pragma once

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "changen/core/types.hpp"
#include "changen/gennet/layers.hpp"

namespace changen::adv {

struct DiscriminatorConfig {
  int class_count = 2;
  double width_scale = 1.0;

  /// Real classes plus one trailing "fake" class.
  int output_classes() const { return class_count + 1; }
  /// Index of the fake class.
  int fake_class() const { return class_count; }
  void validate() const;
  std::uint64_t hash() const;
};

void to_json(nlohmann::json& j, const DiscriminatorConfig& c);
void from_json(const nlohmann::json& j, DiscriminatorConfig& c);

/// Pre-activation residual block of the discriminator U-Net.
class DiscBlockImpl : public torch::nn::Module {
 public:
  DiscBlockImpl(int in, int out);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  gen::SNConv2d conv1_{nullptr};
  gen::SNConv2d conv2_{nullptr};
  gen::SNConv2d shortcut_{nullptr};
};
TORCH_MODULE(DiscBlock);

/// Segmentation-style discriminator: per-pixel scores over C real classes plus "fake".
/// Six encoder levels (1x .. 1/32) mirrored by a decoder with skip connections.
class DiscriminatorImpl : public torch::nn::Module {
 public:
  explicit DiscriminatorImpl(const DiscriminatorConfig& cfg);
  const DiscriminatorConfig& config() const { return cfg_; }

  /// [N, 3, H, W] -> logits [N, C + 1, H, W]. H and W must be multiples of 32.
  torch::Tensor forward(const torch::Tensor& image);

 private:
  DiscriminatorConfig cfg_;
  std::vector<DiscBlock> down_;
  std::vector<DiscBlock> up_;
  gen::SNConv2d classifier_{nullptr};
};
TORCH_MODULE(Discriminator);

Discriminator make_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed);

/// Single-image scores [H, W, C + 1] (eval mode, no gradients).
torch::Tensor discriminate(const ImageArray& image, Discriminator& discriminator);

}  // namespace changen::adv
