#pragma once

#include <array>
#include <vector>

#include <torch/torch.h>

#include "changen/core/types.hpp"
#include "changen/gennet/config.hpp"
#include "changen/gennet/layers.hpp"

namespace changen::gen {

/// Six multi-scale feature maps, level 0 coarsest. Each level is [N, C_i, H_i, W_i].
struct FeaturePyramid {
  std::array<torch::Tensor, kPyramidLevels> levels;

  const torch::Tensor& operator[](int i) const { return levels.at(static_cast<std::size_t>(i)); }
  torch::Tensor& operator[](int i) { return levels.at(static_cast<std::size_t>(i)); }

  /// Throws ShapeError unless every level matches the size formula for (height, width).
  void validate(const GeneratorConfig& cfg, int height, int width) const;
};

/// Gaussian noise map [d_z, H, W] (or batched [N, d_z, H, W]).
struct NoiseMap {
  torch::Tensor values;
};

NoiseMap sample_noise(int channels, int height, int width, std::uint64_t seed);
torch::Tensor sample_noise_batch(std::int64_t n, int channels, int height, int width,
                                 at::Generator& gen, torch::Dtype dtype = torch::kFloat32);

/// Throws ShapeError when h or w is not a positive multiple of 32.
void require_divisible(int height, int width);

/// Residual block of the 18-layer backbone.
class BasicBlockImpl : public torch::nn::Module {
 public:
  BasicBlockImpl(int in, int out, int stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  SNConv2d conv1_{nullptr};
  SNConv2d conv2_{nullptr};
  SNConv2d shortcut_{nullptr};
};
TORCH_MODULE(BasicBlock);

/// U-Net over an 18-layer residual backbone. Level i has 512/2^i (scaled) channels at
/// 1/2^(5-i) of the input resolution.
class ImageEncoderImpl : public torch::nn::Module {
 public:
  explicit ImageEncoderImpl(const GeneratorConfig& cfg);
  FeaturePyramid forward(const torch::Tensor& image);

 private:
  SNConv2d stem_{nullptr};
  torch::nn::Sequential layer1_{nullptr}, layer2_{nullptr}, layer3_{nullptr}, layer4_{nullptr};
  SNConv2d lateral_{nullptr};
  std::vector<SNConv2d> merge_;
};
TORCH_MODULE(ImageEncoder);

/// Per-position selector: post-event features where `foreground` is set, pre-event
/// features elsewhere. foreground is boolean [N, 1, H, W] (broadcast over channels).
torch::Tensor masking(const torch::Tensor& f_t, const torch::Tensor& f_t1, const torch::Tensor& foreground);

/// Pre-event foreground of a label batch [N, H, W] at a feature resolution, as [N,1,h,w] bool.
torch::Tensor foreground_at(const torch::Tensor& labels, int height, int width);

class DestyleImpl : public torch::nn::Module {
 public:
  explicit DestyleImpl(int channels);
  /// 1x1 conv followed by instance normalization (pre-activation stage).
  torch::Tensor normalize(const torch::Tensor& x);
  torch::Tensor forward(const torch::Tensor& x) { return lrelu(normalize(x)); }

 private:
  SNConv2d proj_{nullptr};
};
TORCH_MODULE(Destyle);

/// Computes a change field: masking -> de-styling -> modulation by the post-event mask.
class MaskedTransitionImpl : public torch::nn::Module {
 public:
  MaskedTransitionImpl(int channels, int label_channels, int hidden, bool use_masking, bool use_destyle);

  /// fg_t: [N,1,h,w] bool pre-event foreground; seg_t1: one-hot post-event mask (any size).
  torch::Tensor forward(const torch::Tensor& f_t, const torch::Tensor& f_t1, const torch::Tensor& fg_t,
                        const torch::Tensor& seg_t1);

  /// Output of the masking stage only (f_t when masking is disabled).
  torch::Tensor select(const torch::Tensor& f_t, const torch::Tensor& f_t1, const torch::Tensor& fg_t) const;

 private:
  bool use_masking_;
  bool use_destyle_;
  Destyle destyle_{nullptr};
  Spade spade_{nullptr};
};
TORCH_MODULE(MaskedTransition);

/// Decoder residual block with spatially-adaptive group normalization conditioned on
/// (one-hot mask ++ noise); optionally doubles the resolution afterwards.
class DecoderBlockImpl : public torch::nn::Module {
 public:
  DecoderBlockImpl(int in, int out, int cond_channels, int hidden, bool upsample);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& cond);

 private:
  bool upsample_;
  Spade norm0_{nullptr}, norm1_{nullptr}, norm_shortcut_{nullptr};
  SNConv2d conv0_{nullptr}, conv1_{nullptr}, conv_shortcut_{nullptr};
};
TORCH_MODULE(DecoderBlock);

/// Intermediate results of one synthesis pass.
struct SynthesisTrace {
  FeaturePyramid pre_event;    // encoder features of the pre-event image
  FeaturePyramid post_event;   // decoder features before each change field is added
  FeaturePyramid change_field; // one change field per level
  torch::Tensor image;
};

/// Conditional generator I_{t+1} = G(S_{t+1}, I_t, S_t, z).
class GeneratorImpl : public torch::nn::Module {
 public:
  explicit GeneratorImpl(const GeneratorConfig& cfg);

  const GeneratorConfig& config() const { return cfg_; }

  FeaturePyramid encode(const torch::Tensor& image_t);

  /// Change field at `level`. mask_t / mask_t1 are full-resolution labels [N, H, W].
  torch::Tensor transition(int level, const torch::Tensor& f_t, const torch::Tensor& f_t1,
                           const torch::Tensor& mask_t, const torch::Tensor& mask_t1);

  /// One decoder step: G_i(f_{t+1,i} + delta, S_{t+1}, z). `cond` is (one-hot ++ noise) at
  /// full resolution. Levels 0..4 double the resolution and move to the next level's
  /// channel count; level 5 keeps its shape.
  torch::Tensor decode_step(int level, const torch::Tensor& f_t1, const torch::Tensor& delta,
                            const torch::Tensor& cond);

  /// (one-hot S_{t+1} ++ z) in the generator's dtype.
  torch::Tensor conditioning(const torch::Tensor& mask_t1, const torch::Tensor& noise) const;

  /// Batched synthesis. mask_t1, mask_t: [N,H,W] int64; image_t: [N,3,H,W]; noise: [N,d_z,H,W].
  torch::Tensor forward(const torch::Tensor& mask_t1, const torch::Tensor& image_t,
                        const torch::Tensor& mask_t, const torch::Tensor& noise);

  SynthesisTrace trace(const torch::Tensor& mask_t1, const torch::Tensor& image_t,
                       const torch::Tensor& mask_t, const torch::Tensor& noise);

  torch::Dtype dtype() const { return head_->parameters().front().scalar_type(); }

 private:
  GeneratorConfig cfg_;
  ImageEncoder encoder_{nullptr};
  SNConv2d input_{nullptr};
  std::vector<MaskedTransition> transitions_;
  std::vector<DecoderBlock> blocks_;
  SNConv2d head_{nullptr};
};
TORCH_MODULE(Generator);

/// Builds a generator with weights drawn from `seed`.
Generator make_generator(const GeneratorConfig& cfg, std::uint64_t seed);

/// Single-image encoder pass (eval mode, no gradients). Levels are [1, C_i, H_i, W_i].
FeaturePyramid encode_image(const ImageArray& image_t, Generator& generator);

/// Single-image synthesis (eval mode, no gradients). Output lies in [-1, 1].
ImageArray synthesize(const SemanticMask& mask_t1, const ImageArray& image_t, const SemanticMask& mask_t,
                      const NoiseMap& z, Generator& generator);

}  // namespace changen::gen
