#pragma once

#include <utility>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "changen/core/rng.hpp"
#include "changen/core/types.hpp"

namespace changen::adv {

struct AugmentConfig {
  bool flip = true;
  bool rotate = true;
  bool transpose = true;
  bool scale_jitter = true;
  double scale_lo = 1.0;
  double scale_hi = 1.25;
  /// Random crop side; 0 keeps the full (possibly jittered) extent.
  int crop_size = 256;
};

void to_json(nlohmann::json& j, const AugmentConfig& c);
void from_json(const nlohmann::json& j, AugmentConfig& c);

/// Applies one random geometric transform to an image [3, H, W] and its labels [H, W].
/// Labels are only ever permuted or nearest-resampled. Throws ValidationError when the
/// crop is larger than the input.
std::pair<torch::Tensor, torch::Tensor> augment(const torch::Tensor& image, const torch::Tensor& labels,
                                                const AugmentConfig& cfg, Rng& rng);

std::pair<ImageArray, SemanticMask> augment(const ImageArray& image, const SemanticMask& mask,
                                            const AugmentConfig& cfg, Rng& rng);

}  // namespace changen::adv
