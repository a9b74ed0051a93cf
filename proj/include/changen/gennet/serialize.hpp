#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include "changen/gennet/checkpoint.hpp"
#include "changen/gennet/generator.hpp"

namespace changen::gen {

/// Tensor group and blob names shared by generator-only and training checkpoints.
inline constexpr const char* kGeneratorGroup = "generator";
inline constexpr const char* kGeneratorConfigBlob = "generator_config";

/// Adds the generator's parameters, spectral-norm vectors and config to `ckpt`.
void store_generator(Checkpoint& ckpt, Generator& generator);

/// Writes a generator-only checkpoint.
void save_generator(const std::filesystem::path& path, Generator& generator, std::uint64_t iteration);

/// Rebuilds a generator from any checkpoint holding a generator group (generator-only or
/// training state). When `expected` is given its hash must match unless force is set.
Generator load_generator(const std::filesystem::path& path, const std::optional<GeneratorConfig>& expected = {},
                         bool force = false);
Generator restore_generator(const Checkpoint& ckpt, const std::optional<GeneratorConfig>& expected = {},
                            bool force = false);

}  // namespace changen::gen
