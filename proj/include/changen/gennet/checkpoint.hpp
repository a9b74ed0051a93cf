#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace changen {

/// Ordered (name, tensor) list: parameters followed by buffers of a module.
using TensorDict = std::vector<std::pair<std::string, torch::Tensor>>;

/// Versioned binary container.
///
/// Layout (little-endian):
///   "CHGNCKPT" | u32 format_version | u64 config_hash | u64 iteration
///   u32 #tensor-groups, each: str name | u32 #tensors | tensor*
///   u32 #blobs, each: str name | str bytes
/// where str = u64 length + bytes and tensor = str name | u8 dtype | u32 ndim | i64 dims[ndim] |
/// u64 nbytes | raw contiguous data.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t format_version = kFormatVersion;
  std::uint64_t config_hash = 0;
  std::uint64_t iteration = 0;
  std::map<std::string, TensorDict> tensors;
  std::map<std::string, std::string> blobs;

  const TensorDict& group(const std::string& name) const;
  const std::string& blob(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws CheckpointError when hashes differ, unless force is set.
void check_config_hash(const Checkpoint& ckpt, std::uint64_t expected, bool force);

/// Snapshot (cloned) of every parameter and buffer, with hierarchical names.
TensorDict module_state(const torch::nn::Module& module);

/// Copies a snapshot into a module. Names, shapes and dtypes must match exactly.
void load_module_state(torch::nn::Module& module, const TensorDict& state);

/// Serializes an optimizer through libtorch's archive into an opaque byte string.
std::string optimizer_bytes(const torch::optim::Optimizer& optimizer);
void load_optimizer_bytes(torch::optim::Optimizer& optimizer, const std::string& bytes);

}  // namespace changen
