#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "changen/core/dataset.hpp"
#include "changen/core/rng.hpp"
#include "changen/core/types.hpp"
#include "changen/eventsim/events.hpp"
#include "changen/gennet/generator.hpp"

namespace changen::datagen {

/// Which image a chain step is conditioned on when n > 1.
enum class ChainConditioning {
  Generated,  // step j uses (I_{t+j-1}, S_{t+j-1})
  Real,       // step j uses the real (I_t, S_t)
};

struct GenerateConfig {
  int n = 1;
  ChainConditioning conditioning = ChainConditioning::Generated;
  /// 0 = whole-image inference; otherwise tiles of this size (a multiple of 32).
  int tile_size = 0;

  void validate() const;
};

void to_json(nlohmann::json& j, const GenerateConfig& c);
void from_json(const nlohmann::json& j, GenerateConfig& c);

struct BitemporalSample {
  ImageArray image_t;
  ImageArray image_t1;
  SemanticMask mask_t;
  SemanticMask mask_t1;
  eventsim::ChangeLabel change;
  eventsim::EventResult events;
};

/// Padding that brings an extent up to the next multiple of `multiple`.
int padded_extent(int extent, int multiple);

/// Generator call for any size: edge-replicate padding up to a multiple of 32, synthesis,
/// crop back. With tile_size > 0 the padded canvas is cut into independent tiles whose
/// outputs are pasted without blending, so seams are expected.
ImageArray synthesize_any(const SemanticMask& mask_t1, const ImageArray& image_t, const SemanticMask& mask_t,
                          std::uint64_t noise_seed, gen::Generator& generator, int tile_size = 0);

/// Mean absolute difference between whole-image and tiled synthesis for the same noise.
double tiling_discrepancy(const SemanticMask& mask_t1, const ImageArray& image_t, const SemanticMask& mask_t,
                          std::uint64_t noise_seed, gen::Generator& generator, int tile_size);

/// n-step change chain from one pre-event pair. Sample j pairs step j-1 with step j.
std::vector<BitemporalSample> sample_scp(const ImageArray& image_t, const SemanticMask& mask_t,
                                         gen::Generator& generator, const eventsim::EventConfig& events,
                                         Rng& rng, int n, const GenerateConfig& cfg = {},
                                         std::span<const eventsim::Instance> global_pool = {});

/// Writes |dataset| * n samples under out/ (t0, t1, masks_t0, masks_t1, change, events)
/// plus out/manifest.jsonl. Sources already complete in the manifest are skipped, and
/// records of a half-written source are discarded and regenerated.
std::filesystem::path generate_dataset(const SingleTemporalDataset& dataset, gen::Generator& generator,
                                       const eventsim::EventConfig& events, const GenerateConfig& cfg,
                                       const std::filesystem::path& out, std::uint64_t seed,
                                       const std::function<void(std::size_t, std::size_t)>& progress = {});

/// Id of chain step j (1-based) of a source item.
std::string sample_id(const std::string& source_id, int step);

}  // namespace changen::datagen
