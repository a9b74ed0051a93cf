#pragma once

#include <filesystem>
#include <vector>

#include "changen/core/rng.hpp"
#include "changen/core/types.hpp"

namespace changen::toy {

/// Procedural "aerial" scenes: textured ground, rectangular buildings (label 1) and,
/// when class_count >= 3, elliptical ponds (label 2).
struct SceneConfig {
  int size = 64;
  int class_count = 3;
  int min_buildings = 2;
  int max_buildings = 6;
  int max_ponds = 1;
};

struct Scene {
  ImageArray image;
  SemanticMask mask;
};

Scene make_scene(const SceneConfig& cfg, Rng& rng);

/// A real-looking change pair: buildings are demolished and constructed between the two
/// acquisitions, and the whole scene is re-lit with fresh sensor noise at t1.
struct ChangePair {
  Scene before;
  Scene after;
};

ChangePair make_change_pair(const SceneConfig& cfg, Rng& rng);

/// Writes `count` scenes plus a single-temporal manifest under out/. Returns the manifest path.
std::filesystem::path write_single_temporal(const std::filesystem::path& out, int count,
                                            const SceneConfig& cfg, std::uint64_t seed);

/// Writes `count` change pairs plus a bitemporal manifest under out/. Returns the manifest path.
std::filesystem::path write_bitemporal(const std::filesystem::path& out, int count,
                                       const SceneConfig& cfg, std::uint64_t seed);

}  // namespace changen::toy
