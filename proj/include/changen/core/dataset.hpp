#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "changen/core/types.hpp"

namespace changen {

/// One image/mask pair of a single-temporal dataset. Paths are absolute after loading.
struct DatasetItem {
  std::string id;
  std::filesystem::path image;
  std::filesystem::path mask;
};

/// Validated single-temporal dataset. Immutable once built; safe to share across readers.
class SingleTemporalDataset {
 public:
  SingleTemporalDataset() = default;
  SingleTemporalDataset(std::vector<DatasetItem> items, int class_count);

  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const std::vector<DatasetItem>& items() const { return items_; }
  const DatasetItem& item(std::size_t i) const { return items_.at(i); }
  int class_count() const { return class_count_; }

  /// Common spatial size, or nullopt when items differ in size.
  std::optional<std::pair<int, int>> resolution() const { return resolution_; }
  void set_resolution(std::optional<std::pair<int, int>> r) { resolution_ = r; }

  std::pair<ImageArray, SemanticMask> load(std::size_t i) const;

 private:
  std::vector<DatasetItem> items_;
  int class_count_ = 2;
  std::optional<std::pair<int, int>> resolution_;
};

/// Reads a line-delimited manifest of {"id", "image", "mask"} records whose paths are
/// relative to the manifest's directory. A relative manifest path resolves against root.
/// class_count is inferred as max label + 1 unless override is given.
SingleTemporalDataset load_dataset(const std::filesystem::path& root,
                                   const std::filesystem::path& manifest,
                                   std::optional<int> class_count_override = std::nullopt);

/// Writes a single-temporal manifest with paths relative to the manifest's directory.
void write_dataset_manifest(const std::filesystem::path& manifest,
                            const std::vector<DatasetItem>& items);

/// In-memory copy of a dataset with uniform resolution: images [N,3,H,W], masks [N,H,W].
struct DatasetTensors {
  torch::Tensor images;
  torch::Tensor masks;
  int class_count = 2;
  std::vector<std::string> ids;
};
DatasetTensors load_tensors(const SingleTemporalDataset& dataset);

/// One record of a bitemporal manifest; paths relative to the manifest's directory.
struct BitemporalRecord {
  std::string id;
  std::string t0_image;
  std::string t0_mask;
  std::string t1_image;
  std::string t1_mask;
  std::string change;
  std::string events;

  friend bool operator==(const BitemporalRecord&, const BitemporalRecord&) = default;
};

void to_json(nlohmann::json& j, const BitemporalRecord& r);
void from_json(const nlohmann::json& j, BitemporalRecord& r);

/// Reads every record of a bitemporal manifest (missing file -> empty list).
std::vector<BitemporalRecord> read_bitemporal_manifest(const std::filesystem::path& manifest);
void append_bitemporal_record(const std::filesystem::path& manifest, const BitemporalRecord& record);

/// Bitemporal samples held in memory: images [N,3,H,W], masks [N,H,W], change [N,H,W] in {0,1,2}.
struct BitemporalTensors {
  torch::Tensor images_t;
  torch::Tensor images_t1;
  torch::Tensor masks_t;
  torch::Tensor masks_t1;
  torch::Tensor change;
  std::vector<std::string> ids;
  int class_count = 2;

  std::int64_t size() const { return images_t.defined() ? images_t.size(0) : 0; }
  BitemporalTensors select(const torch::Tensor& index) const;
};

/// Loads a bitemporal manifest into memory, checking every referenced file.
BitemporalTensors load_bitemporal(const std::filesystem::path& manifest, int class_count);

}  // namespace changen
