#include "changen/gennet/generator.hpp"

#include <cmath>
#include <string>

#include "changen/core/error.hpp"
#include "changen/core/rng.hpp"
#include "changen/core/tensor.hpp"

namespace changen::gen {

int GeneratorConfig::level_channels(int level) const {
  return std::max(1, static_cast<int>(std::lround(512.0 * width_scale / std::ldexp(1.0, level))));
}

void GeneratorConfig::validate() const {
  if (class_count < 2) throw ConfigError("generator class_count must be >= 2");
  if (!(width_scale > 0.0)) throw ConfigError("width_scale must be positive");
  if (noise_channels < 0) throw ConfigError("noise_channels must be >= 0");
  if (spade_hidden < 1) throw ConfigError("spade_hidden must be >= 1");
}

std::uint64_t GeneratorConfig::hash() const { return fnv1a(nlohmann::json(*this).dump()); }

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = nlohmann::json{{"class_count", c.class_count},   {"width_scale", c.width_scale},
                     {"noise_channels", c.noise_channels}, {"spade_hidden", c.spade_hidden},
                     {"use_masking", c.use_masking},   {"use_destyle", c.use_destyle}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  const GeneratorConfig d;
  c.class_count = j.value("class_count", d.class_count);
  c.width_scale = j.value("width_scale", d.width_scale);
  c.noise_channels = j.value("noise_channels", d.noise_channels);
  c.spade_hidden = j.value("spade_hidden", d.spade_hidden);
  c.use_masking = j.value("use_masking", d.use_masking);
  c.use_destyle = j.value("use_destyle", d.use_destyle);
}

void require_divisible(int height, int width) {
  if (height < kInputStride || width < kInputStride || height % kInputStride != 0 ||
      width % kInputStride != 0) {
    throw ShapeError("input " + std::to_string(height) + "x" + std::to_string(width) +
                     " is not a multiple of 32; pad or tile it first");
  }
}

void FeaturePyramid::validate(const GeneratorConfig& cfg, int height, int width) const {
  for (int i = 0; i < kPyramidLevels; ++i) {
    const auto& f = levels[static_cast<std::size_t>(i)];
    if (!f.defined() || f.dim() != 4 || f.size(1) != cfg.level_channels(i) ||
        f.size(2) != cfg.level_extent(i, height) || f.size(3) != cfg.level_extent(i, width)) {
      throw ShapeError("pyramid level " + std::to_string(i) + " violates the size formula");
    }
  }
}

NoiseMap sample_noise(int channels, int height, int width, std::uint64_t seed) {
  auto gen = torch_generator(seed);
  return NoiseMap{sample_noise_batch(1, channels, height, width, gen).squeeze(0)};
}

torch::Tensor sample_noise_batch(std::int64_t n, int channels, int height, int width, at::Generator& gen,
                                 torch::Dtype dtype) {
  return torch::randn({n, channels, height, width}, gen, torch::TensorOptions().dtype(torch::kFloat32))
      .to(dtype);
}

BasicBlockImpl::BasicBlockImpl(int in, int out, int stride) {
  conv1_ = register_module("conv1", SNConv2d(SNConv2dOptions(in, out, 3).with_stride(stride)));
  conv2_ = register_module("conv2", SNConv2d(SNConv2dOptions(out, out, 3)));
  if (in != out || stride != 1) {
    shortcut_ = register_module(
        "shortcut", SNConv2d(SNConv2dOptions(in, out, 1).with_stride(stride).with_bias(false)));
  }
}

torch::Tensor BasicBlockImpl::forward(const torch::Tensor& x) {
  auto y = conv2_->forward(lrelu(conv1_->forward(x)));
  auto skip = shortcut_ ? shortcut_->forward(x) : x;
  return lrelu(y + skip);
}

namespace {

torch::nn::Sequential make_stage(int in, int out, int stride) {
  torch::nn::Sequential stage;
  stage->push_back(BasicBlock(in, out, stride));
  stage->push_back(BasicBlock(out, out, 1));
  return stage;
}

}  // namespace

ImageEncoderImpl::ImageEncoderImpl(const GeneratorConfig& cfg) {
  const double s = cfg.width_scale;
  const int c64 = scaled_channels(64, s), c128 = scaled_channels(128, s);
  const int c256 = scaled_channels(256, s), c512 = scaled_channels(512, s);
  stem_ = register_module("stem", SNConv2d(SNConv2dOptions(3, c64, 7).with_stride(2)));
  layer1_ = register_module("layer1", make_stage(c64, c64, 1));
  layer2_ = register_module("layer2", make_stage(c64, c128, 2));
  layer3_ = register_module("layer3", make_stage(c128, c256, 2));
  layer4_ = register_module("layer4", make_stage(c256, c512, 2));
  lateral_ = register_module("lateral", SNConv2d(SNConv2dOptions(c512, cfg.level_channels(0), 3)));
  const int skip_channels[] = {c256, c128, c64, c64, 3};
  for (int i = 1; i < kPyramidLevels; ++i) {
    merge_.push_back(register_module(
        "merge" + std::to_string(i),
        SNConv2d(SNConv2dOptions(cfg.level_channels(i - 1) + skip_channels[i - 1], cfg.level_channels(i), 3))));
  }
}

FeaturePyramid ImageEncoderImpl::forward(const torch::Tensor& image) {
  auto s = lrelu(stem_->forward(image));
  auto p = torch::max_pool2d(s, 3, 2, 1);
  auto l1 = layer1_->forward(p);
  auto l2 = layer2_->forward(l1);
  auto l3 = layer3_->forward(l2);
  auto l4 = layer4_->forward(l3);
  const torch::Tensor skips[] = {l3, l2, l1, s, image};

  FeaturePyramid pyramid;
  pyramid[0] = lrelu(lateral_->forward(l4));
  for (int i = 1; i < kPyramidLevels; ++i) {
    auto merged = torch::cat({upsample2x(pyramid[i - 1]), skips[i - 1]}, 1);
    pyramid[i] = lrelu(merge_[static_cast<std::size_t>(i - 1)]->forward(merged));
  }
  return pyramid;
}

torch::Tensor masking(const torch::Tensor& f_t, const torch::Tensor& f_t1, const torch::Tensor& foreground) {
  if (!f_t.sizes().equals(f_t1.sizes())) throw ShapeError("masking: pre/post feature shapes differ");
  if (foreground.dim() != 4 || foreground.size(0) != f_t.size(0) || foreground.size(1) != 1 ||
      foreground.size(2) != f_t.size(2) || foreground.size(3) != f_t.size(3)) {
    throw ShapeError("masking: foreground map must be [N, 1, H, W] at the feature resolution");
  }
  return torch::where(foreground.to(torch::kBool), f_t1, f_t);
}

torch::Tensor foreground_at(const torch::Tensor& labels, int height, int width) {
  return resize_labels(labels, height, width).gt(0).unsqueeze(1);
}

DestyleImpl::DestyleImpl(int channels) {
  proj_ = register_module("proj", SNConv2d(SNConv2dOptions(channels, channels, 1)));
}

torch::Tensor DestyleImpl::normalize(const torch::Tensor& x) { return instance_norm(proj_->forward(x)); }

MaskedTransitionImpl::MaskedTransitionImpl(int channels, int label_channels, int hidden, bool use_masking,
                                           bool use_destyle)
    : use_masking_(use_masking), use_destyle_(use_destyle) {
  if (use_destyle_) destyle_ = register_module("destyle", Destyle(channels));
  spade_ = register_module("spade", Spade(channels, label_channels, hidden, NormKind::Instance));
}

torch::Tensor MaskedTransitionImpl::select(const torch::Tensor& f_t, const torch::Tensor& f_t1,
                                           const torch::Tensor& fg_t) const {
  if (!f_t.sizes().equals(f_t1.sizes())) throw ShapeError("transition: pre/post feature shapes differ");
  return use_masking_ ? masking(f_t, f_t1, fg_t) : f_t;
}

torch::Tensor MaskedTransitionImpl::forward(const torch::Tensor& f_t, const torch::Tensor& f_t1,
                                            const torch::Tensor& fg_t, const torch::Tensor& seg_t1) {
  auto x = select(f_t, f_t1, fg_t);
  if (use_destyle_) x = destyle_->forward(x);
  return spade_->forward(x, seg_t1);
}

DecoderBlockImpl::DecoderBlockImpl(int in, int out, int cond_channels, int hidden, bool upsample)
    : upsample_(upsample) {
  const int mid = std::min(in, out);
  norm0_ = register_module("norm0", Spade(in, cond_channels, hidden, NormKind::Group));
  conv0_ = register_module("conv0", SNConv2d(SNConv2dOptions(in, mid, 3)));
  norm1_ = register_module("norm1", Spade(mid, cond_channels, hidden, NormKind::Group));
  conv1_ = register_module("conv1", SNConv2d(SNConv2dOptions(mid, out, 3)));
  if (in != out) {
    norm_shortcut_ = register_module("norm_shortcut", Spade(in, cond_channels, hidden, NormKind::Group));
    conv_shortcut_ = register_module("conv_shortcut", SNConv2d(SNConv2dOptions(in, out, 1).with_bias(false)));
  }
}

torch::Tensor DecoderBlockImpl::forward(const torch::Tensor& x, const torch::Tensor& cond) {
  auto skip = conv_shortcut_ ? conv_shortcut_->forward(norm_shortcut_->forward(x, cond)) : x;
  auto dx = conv0_->forward(lrelu(norm0_->forward(x, cond)));
  dx = conv1_->forward(lrelu(norm1_->forward(dx, cond)));
  auto out = skip + dx;
  return upsample_ ? upsample2x(out) : out;
}

GeneratorImpl::GeneratorImpl(const GeneratorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const int cond_channels = cfg_.class_count + cfg_.noise_channels;
  const int hidden = scaled_channels(cfg_.spade_hidden, cfg_.width_scale);
  encoder_ = register_module("encoder", ImageEncoder(cfg_));
  input_ = register_module("input", SNConv2d(SNConv2dOptions(cond_channels, cfg_.level_channels(0), 3)));
  for (int i = 0; i < kPyramidLevels; ++i) {
    const int ch = cfg_.level_channels(i);
    const bool last = i == kPyramidLevels - 1;
    transitions_.push_back(register_module(
        "transition" + std::to_string(i),
        MaskedTransition(ch, cfg_.class_count, hidden, cfg_.use_masking, cfg_.use_destyle)));
    blocks_.push_back(register_module(
        "block" + std::to_string(i),
        DecoderBlock(ch, last ? ch : cfg_.level_channels(i + 1), cond_channels, hidden, !last)));
  }
  head_ = register_module("head", SNConv2d(SNConv2dOptions(cfg_.level_channels(kPyramidLevels - 1), 3, 3)));
}

FeaturePyramid GeneratorImpl::encode(const torch::Tensor& image_t) {
  if (image_t.dim() != 4 || image_t.size(1) != 3) throw ShapeError("encoder expects [N, 3, H, W]");
  require_divisible(static_cast<int>(image_t.size(2)), static_cast<int>(image_t.size(3)));
  return encoder_->forward(image_t);
}

torch::Tensor GeneratorImpl::transition(int level, const torch::Tensor& f_t, const torch::Tensor& f_t1,
                                        const torch::Tensor& mask_t, const torch::Tensor& mask_t1) {
  const int h = static_cast<int>(f_t.size(2));
  const int w = static_cast<int>(f_t.size(3));
  auto fg = foreground_at(mask_t, h, w);
  auto seg = one_hot(resize_labels(mask_t1, h, w), cfg_.class_count, f_t.scalar_type());
  return transitions_.at(static_cast<std::size_t>(level))->forward(f_t, f_t1, fg, seg);
}

torch::Tensor GeneratorImpl::decode_step(int level, const torch::Tensor& f_t1, const torch::Tensor& delta,
                                         const torch::Tensor& cond) {
  if (!f_t1.sizes().equals(delta.sizes())) throw ShapeError("decode step: change field shape mismatch");
  return blocks_.at(static_cast<std::size_t>(level))->forward(f_t1 + delta, cond);
}

torch::Tensor GeneratorImpl::conditioning(const torch::Tensor& mask_t1, const torch::Tensor& noise) const {
  auto seg = one_hot(mask_t1, cfg_.class_count, noise.scalar_type());
  if (noise.size(1) != cfg_.noise_channels || noise.size(2) != seg.size(2) || noise.size(3) != seg.size(3)) {
    throw ShapeError("noise map must be [N, d_z, H, W] matching the mask");
  }
  return torch::cat({seg, noise}, 1);
}

SynthesisTrace GeneratorImpl::trace(const torch::Tensor& mask_t1, const torch::Tensor& image_t,
                                    const torch::Tensor& mask_t, const torch::Tensor& noise) {
  const int h = static_cast<int>(image_t.size(2));
  const int w = static_cast<int>(image_t.size(3));
  if (mask_t1.dim() != 3 || mask_t.dim() != 3 || mask_t1.size(1) != h || mask_t1.size(2) != w ||
      !mask_t.sizes().equals(mask_t1.sizes()) || noise.size(0) != image_t.size(0)) {
    throw ShapeError("masks, image and noise must share batch and spatial size");
  }
  SynthesisTrace out;
  out.pre_event = encode(image_t);
  auto cond = conditioning(mask_t1, noise);
  auto x = input_->forward(resize_nearest(cond, h / kInputStride, w / kInputStride));
  for (int i = 0; i < kPyramidLevels; ++i) {
    out.post_event[i] = x;
    out.change_field[i] = transition(i, out.pre_event[i], x, mask_t, mask_t1);
    x = decode_step(i, x, out.change_field[i], cond);
  }
  out.image = torch::tanh(head_->forward(lrelu(x)));
  return out;
}

torch::Tensor GeneratorImpl::forward(const torch::Tensor& mask_t1, const torch::Tensor& image_t,
                                     const torch::Tensor& mask_t, const torch::Tensor& noise) {
  return trace(mask_t1, image_t, mask_t, noise).image;
}

Generator make_generator(const GeneratorConfig& cfg, std::uint64_t seed) {
  torch::manual_seed(seed);
  return Generator(cfg);
}

FeaturePyramid encode_image(const ImageArray& image_t, Generator& generator) {
  EvalScope scope(*generator);
  torch::NoGradGuard no_grad;
  return generator->encode(image_t.tensor().unsqueeze(0).to(generator->dtype()));
}

ImageArray synthesize(const SemanticMask& mask_t1, const ImageArray& image_t, const SemanticMask& mask_t,
                      const NoiseMap& z, Generator& generator) {
  if (mask_t1.height() != image_t.height() || mask_t1.width() != image_t.width() ||
      mask_t.height() != image_t.height() || mask_t.width() != image_t.width()) {
    throw ShapeError("synthesize: masks and image differ in size");
  }
  require_divisible(image_t.height(), image_t.width());
  EvalScope scope(*generator);
  torch::NoGradGuard no_grad;
  const auto dtype = generator->dtype();
  auto out = generator->forward(to_tensor(mask_t1).unsqueeze(0), image_t.tensor().unsqueeze(0).to(dtype),
                                to_tensor(mask_t).unsqueeze(0), z.values.unsqueeze(0).to(dtype));
  return ImageArray(out.squeeze(0));
}

}  // namespace changen::gen
