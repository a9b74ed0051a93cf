#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "changen/advtrain/discriminator.hpp"
#include "changen/advtrain/trainer.hpp"
#include "changen/datagen/datagen.hpp"
#include "changen/detector/detector.hpp"
#include "changen/eventsim/events.hpp"
#include "changen/gennet/config.hpp"

namespace changen::app {

/// Everything a CLI run can be configured with. Every section is optional; see README for
/// the key-by-key schema.
struct RunConfig {
  std::uint64_t seed = 0;
  /// Single-temporal source manifest (train-gan, simulate, generate).
  std::filesystem::path data_manifest;
  /// Bitemporal manifests (pretrain-detector, finetune, eval-detector).
  std::filesystem::path synthetic_manifest;
  std::filesystem::path benchmark_train;
  std::filesystem::path benchmark_test;
  int class_count = 2;

  eventsim::EventConfig events;
  gen::GeneratorConfig generator;
  adv::DiscriminatorConfig discriminator;
  adv::GanTrainConfig train;
  datagen::GenerateConfig generate;
  det::DetectorConfig detector;
  det::PretrainConfig pretrain;
  det::PretrainConfig finetune;
  std::string extractor = "color";
};

/// Parses a config document. Relative paths resolve against `base_dir`. A top-level
/// class_count fills the class counts of sections that do not set their own.
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

}  // namespace changen::app
