#include "changen/advtrain/discriminator.hpp"

#include <string>

#include "changen/core/error.hpp"
#include "changen/core/rng.hpp"
#include "changen/gennet/config.hpp"
#include "changen/gennet/generator.hpp"

namespace changen::adv {

using gen::SNConv2d;
using gen::SNConv2dOptions;

void DiscriminatorConfig::validate() const {
  if (class_count < 2) throw ConfigError("discriminator class_count must be >= 2");
  if (!(width_scale > 0.0)) throw ConfigError("width_scale must be positive");
}

std::uint64_t DiscriminatorConfig::hash() const { return fnv1a(nlohmann::json(*this).dump()); }

void to_json(nlohmann::json& j, const DiscriminatorConfig& c) {
  j = nlohmann::json{{"class_count", c.class_count}, {"width_scale", c.width_scale}};
}

void from_json(const nlohmann::json& j, DiscriminatorConfig& c) {
  const DiscriminatorConfig d;
  c.class_count = j.value("class_count", d.class_count);
  c.width_scale = j.value("width_scale", d.width_scale);
}

DiscBlockImpl::DiscBlockImpl(int in, int out) {
  conv1_ = register_module("conv1", SNConv2d(SNConv2dOptions(in, out, 3)));
  conv2_ = register_module("conv2", SNConv2d(SNConv2dOptions(out, out, 3)));
  if (in != out) shortcut_ = register_module("shortcut", SNConv2d(SNConv2dOptions(in, out, 1).with_bias(false)));
}

torch::Tensor DiscBlockImpl::forward(const torch::Tensor& x) {
  auto y = conv2_->forward(gen::lrelu(conv1_->forward(gen::lrelu(x))));
  auto skip = shortcut_ ? shortcut_->forward(x) : x;
  return y + skip;
}

namespace {

constexpr int kBaseWidths[gen::kPyramidLevels] = {64, 64, 128, 128, 256, 256};

}  // namespace

DiscriminatorImpl::DiscriminatorImpl(const DiscriminatorConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  int widths[gen::kPyramidLevels];
  for (int i = 0; i < gen::kPyramidLevels; ++i) widths[i] = gen::scaled_channels(kBaseWidths[i], cfg_.width_scale);
  // level 0 stays at full resolution; levels 1..5 each halve it
  int in = 3;
  for (int i = 0; i < gen::kPyramidLevels; ++i) {
    down_.push_back(register_module("down" + std::to_string(i), DiscBlock(in, widths[i])));
    in = widths[i];
  }
  for (int i = gen::kPyramidLevels - 2; i >= 0; --i) {
    up_.push_back(register_module("up" + std::to_string(i), DiscBlock(in + widths[i], widths[i])));
    in = widths[i];
  }
  classifier_ = register_module("classifier", SNConv2d(SNConv2dOptions(in, cfg_.output_classes(), 1)));
}

torch::Tensor DiscriminatorImpl::forward(const torch::Tensor& image) {
  if (image.dim() != 4 || image.size(1) != 3) throw ShapeError("discriminator expects [N, 3, H, W]");
  gen::require_divisible(static_cast<int>(image.size(2)), static_cast<int>(image.size(3)));
  std::vector<torch::Tensor> skips;
  auto x = image;
  for (int i = 0; i < gen::kPyramidLevels; ++i) {
    if (i > 0) x = torch::avg_pool2d(x, 2);
    x = down_[static_cast<std::size_t>(i)]->forward(x);
    skips.push_back(x);
  }
  for (std::size_t k = 0; k < up_.size(); ++k) {
    const auto& skip = skips[skips.size() - 2 - k];
    x = up_[k]->forward(torch::cat({gen::upsample2x(x), skip}, 1));
  }
  return classifier_->forward(gen::lrelu(x));
}

Discriminator make_discriminator(const DiscriminatorConfig& cfg, std::uint64_t seed) {
  torch::manual_seed(seed);
  return Discriminator(cfg);
}

torch::Tensor discriminate(const ImageArray& image, Discriminator& discriminator) {
  gen::EvalScope scope(*discriminator);
  torch::NoGradGuard no_grad;
  const auto dtype = discriminator->parameters().front().scalar_type();
  return discriminator->forward(image.tensor().unsqueeze(0).to(dtype)).squeeze(0).permute({1, 2, 0}).contiguous();
}

}  // namespace changen::adv
