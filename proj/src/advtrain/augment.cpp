#include "changen/advtrain/augment.hpp"

#include <cmath>
#include <string>

#include "changen/core/error.hpp"
#include "changen/core/tensor.hpp"

namespace changen::adv {

void to_json(nlohmann::json& j, const AugmentConfig& c) {
  j = nlohmann::json{{"flip", c.flip},
                     {"rotate", c.rotate},
                     {"transpose", c.transpose},
                     {"scale_jitter", c.scale_jitter},
                     {"scale_range", {c.scale_lo, c.scale_hi}},
                     {"crop_size", c.crop_size}};
}

void from_json(const nlohmann::json& j, AugmentConfig& c) {
  const AugmentConfig d;
  c.flip = j.value("flip", d.flip);
  c.rotate = j.value("rotate", d.rotate);
  c.transpose = j.value("transpose", d.transpose);
  c.scale_jitter = j.value("scale_jitter", d.scale_jitter);
  if (j.contains("scale_range")) {
    c.scale_lo = j.at("scale_range").at(0).get<double>();
    c.scale_hi = j.at("scale_range").at(1).get<double>();
  }
  c.crop_size = j.value("crop_size", d.crop_size);
}

std::pair<torch::Tensor, torch::Tensor> augment(const torch::Tensor& image, const torch::Tensor& labels,
                                                const AugmentConfig& cfg, Rng& rng) {
  if (image.dim() != 3 || labels.dim() != 2 || image.size(1) != labels.size(0) || image.size(2) != labels.size(1)) {
    throw ShapeError("augment expects aligned [3, H, W] image and [H, W] labels");
  }
  const auto h = image.size(1);
  const auto w = image.size(2);
  if (cfg.crop_size > 0 && (cfg.crop_size > h || cfg.crop_size > w)) {
    throw ValidationError("crop " + std::to_string(cfg.crop_size) + " exceeds input " + std::to_string(h) + "x" +
                          std::to_string(w));
  }
  auto img = image;
  auto lab = labels;

  if (cfg.scale_jitter && cfg.scale_hi > cfg.scale_lo) {
    const double s = rng.uniform(cfg.scale_lo, cfg.scale_hi);
    const auto nh = std::max<std::int64_t>(static_cast<std::int64_t>(std::lround(h * s)), cfg.crop_size);
    const auto nw = std::max<std::int64_t>(static_cast<std::int64_t>(std::lround(w * s)), cfg.crop_size);
    if (nh != h || nw != w) {
      namespace F = torch::nn::functional;
      img = F::interpolate(img.unsqueeze(0), F::InterpolateFuncOptions()
                                                 .size(std::vector<std::int64_t>{nh, nw})
                                                 .mode(torch::kBilinear)
                                                 .align_corners(false))
                .squeeze(0);
      lab = resize_labels(lab.unsqueeze(0), static_cast<int>(nh), static_cast<int>(nw)).squeeze(0);
    }
  }
  if (cfg.flip) {
    if (rng.bernoulli(0.5)) {
      img = img.flip({2});
      lab = lab.flip({1});
    }
    if (rng.bernoulli(0.5)) {
      img = img.flip({1});
      lab = lab.flip({0});
    }
  }
  if (cfg.rotate) {
    const int k = rng.uniform_int(0, 3);
    if (k != 0) {
      img = torch::rot90(img, k, {1, 2});
      lab = torch::rot90(lab, k, {0, 1});
    }
  }
  if (cfg.transpose && rng.bernoulli(0.5)) {
    img = img.transpose(1, 2);
    lab = lab.transpose(0, 1);
  }
  if (cfg.crop_size > 0) {
    const int r = rng.uniform_int(0, static_cast<int>(img.size(1)) - cfg.crop_size);
    const int c = rng.uniform_int(0, static_cast<int>(img.size(2)) - cfg.crop_size);
    img = img.slice(1, r, r + cfg.crop_size).slice(2, c, c + cfg.crop_size);
    lab = lab.slice(0, r, r + cfg.crop_size).slice(1, c, c + cfg.crop_size);
  }
  return {img.contiguous(), lab.contiguous()};
}

std::pair<ImageArray, SemanticMask> augment(const ImageArray& image, const SemanticMask& mask,
                                            const AugmentConfig& cfg, Rng& rng) {
  auto [img, lab] = augment(image.tensor(), to_tensor(mask), cfg, rng);
  return {ImageArray(img.clamp(-1.0, 1.0)), mask_from_tensor(lab, mask.class_count())};
}

}  // namespace changen::adv
