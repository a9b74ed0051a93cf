#pragma once

#include <cstdint>

#include <nlohmann/json.hpp>

namespace changen::gen {

inline constexpr int kPyramidLevels = 6;
/// Total down-sampling between the input and the coarsest pyramid level.
inline constexpr int kInputStride = 32;

struct GeneratorConfig {
  int class_count = 2;
  double width_scale = 1.0;
  int noise_channels = 64;
  /// Hidden width of the spatially-adaptive modulation nets before width scaling.
  int spade_hidden = 128;
  /// Route post-event decoder features onto pre-event foreground before the transition.
  bool use_masking = true;
  /// 1x1 conv + instance norm + leaky ReLU on the masked features.
  bool use_destyle = true;

  /// Channels of pyramid level i: round(512 * width_scale / 2^i), at least 1.
  int level_channels(int level) const;
  /// Spatial size of pyramid level i for an h x w input: h / 2^(5-i).
  int level_extent(int level, int extent) const { return extent >> (kPyramidLevels - 1 - level); }

  void validate() const;
  std::uint64_t hash() const;
};

void to_json(nlohmann::json& j, const GeneratorConfig& c);
void from_json(const nlohmann::json& j, GeneratorConfig& c);

}  // namespace changen::gen
