#include "changen/gennet/serialize.hpp"

#include "changen/core/error.hpp"

namespace changen::gen {

void store_generator(Checkpoint& ckpt, Generator& generator) {
  ckpt.tensors[kGeneratorGroup] = module_state(*generator);
  ckpt.blobs[kGeneratorConfigBlob] = nlohmann::json(generator->config()).dump();
}

void save_generator(const std::filesystem::path& path, Generator& generator, std::uint64_t iteration) {
  Checkpoint ckpt;
  ckpt.config_hash = generator->config().hash();
  ckpt.iteration = iteration;
  store_generator(ckpt, generator);
  save_checkpoint(path, ckpt);
}

Generator restore_generator(const Checkpoint& ckpt, const std::optional<GeneratorConfig>& expected, bool force) {
  GeneratorConfig stored;
  try {
    stored = nlohmann::json::parse(ckpt.blob(kGeneratorConfigBlob)).get<GeneratorConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("unreadable generator config: ") + e.what());
  }
  if (expected && expected->hash() != stored.hash() && !force) {
    throw CheckpointError("generator checkpoint was built for a different configuration; pass --force to load anyway");
  }
  Generator generator(stored);
  const auto& state = ckpt.group(kGeneratorGroup);
  if (!state.empty() && state.front().second.scalar_type() != torch::kFloat32) {
    generator->to(state.front().second.scalar_type());
  }
  load_module_state(*generator, state);
  return generator;
}

Generator load_generator(const std::filesystem::path& path, const std::optional<GeneratorConfig>& expected,
                         bool force) {
  return restore_generator(load_checkpoint(path), expected, force);
}

}  // namespace changen::gen
