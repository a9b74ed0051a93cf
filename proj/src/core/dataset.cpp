#include "changen/core/dataset.hpp"

#include <fstream>
#include <set>
#include <string>

#include "changen/core/error.hpp"
#include "changen/core/image_io.hpp"
#include "changen/core/tensor.hpp"

namespace fs = std::filesystem;

namespace changen {

SingleTemporalDataset::SingleTemporalDataset(std::vector<DatasetItem> items, int class_count)
    : items_(std::move(items)), class_count_(class_count) {
  if (class_count < 2) throw ValidationError("class count must be >= 2");
}

std::pair<ImageArray, SemanticMask> SingleTemporalDataset::load(std::size_t i) const {
  const auto& it = items_.at(i);
  auto image = read_image(it.image);
  auto mask = read_mask(it.mask, class_count_);
  if (image.height() != mask.height() || image.width() != mask.width()) {
    throw ValidationError("item '" + it.id + "': image and mask sizes differ");
  }
  return {std::move(image), std::move(mask)};
}

namespace {

std::string required_string(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw IngestionError(where + ": record lacks string field '" + key + "'");
  }
  return j.at(key).get<std::string>();
}

}  // namespace

SingleTemporalDataset load_dataset(const fs::path& root, const fs::path& manifest,
                                   std::optional<int> class_count_override) {
  const fs::path manifest_path = manifest.is_absolute() ? manifest : root / manifest;
  std::ifstream in(manifest_path);
  if (!in) throw IngestionError("cannot open manifest " + manifest_path.string());
  const fs::path base = manifest_path.parent_path();

  std::vector<DatasetItem> items;
  std::set<std::string> seen;
  std::optional<std::pair<int, int>> common;
  bool uniform = true;
  int max_label = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestionError(manifest_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string where = manifest_path.string() + ":" + std::to_string(line_no);
    DatasetItem item{required_string(j, "id", where), base / required_string(j, "image", where),
                     base / required_string(j, "mask", where)};
    if (!seen.insert(item.id).second) throw IngestionError("duplicate id '" + item.id + "'");
    if (!fs::exists(item.image)) {
      throw IngestionError("item '" + item.id + "': missing image " + item.image.string());
    }
    if (!fs::exists(item.mask)) {
      throw IngestionError("item '" + item.id + "': missing mask " + item.mask.string());
    }
    const auto image_size = png_size(item.image);
    const auto mask = read_mask(item.mask, 256);
    if (image_size != std::make_pair(mask.height(), mask.width())) {
      throw ValidationError("item '" + item.id + "': image " + std::to_string(image_size.first) +
                            "x" + std::to_string(image_size.second) + " vs mask " +
                            std::to_string(mask.height()) + "x" + std::to_string(mask.width()));
    }
    max_label = std::max<int>(max_label, mask.max_label());
    if (!common) common = image_size;
    uniform = uniform && *common == image_size;
    items.push_back(std::move(item));
  }

  int class_count = std::max(2, max_label + 1);
  if (class_count_override) {
    if (*class_count_override <= max_label) {
      throw ValidationError("class count override " + std::to_string(*class_count_override) +
                            " does not cover label " + std::to_string(max_label));
    }
    class_count = *class_count_override;
  }
  SingleTemporalDataset ds(std::move(items), class_count);
  ds.set_resolution(uniform ? common : std::nullopt);
  return ds;
}

void write_dataset_manifest(const fs::path& manifest, const std::vector<DatasetItem>& items) {
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  std::ofstream out(manifest);
  if (!out) throw IngestionError("cannot write manifest " + manifest.string());
  const fs::path base = manifest.parent_path();
  for (const auto& it : items) {
    nlohmann::json j{{"id", it.id},
                     {"image", fs::relative(it.image, base).generic_string()},
                     {"mask", fs::relative(it.mask, base).generic_string()}};
    out << j.dump() << '\n';
  }
}

DatasetTensors load_tensors(const SingleTemporalDataset& dataset) {
  if (!dataset.resolution()) {
    throw ValidationError("dataset items differ in size; tile them before loading into memory");
  }
  std::vector<ImageArray> images;
  std::vector<SemanticMask> masks;
  DatasetTensors out;
  out.class_count = dataset.class_count();
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    auto [image, mask] = dataset.load(i);
    images.push_back(std::move(image));
    masks.push_back(std::move(mask));
    out.ids.push_back(dataset.item(i).id);
  }
  out.images = stack_images(images);
  out.masks = stack_masks(masks);
  return out;
}

void to_json(nlohmann::json& j, const BitemporalRecord& r) {
  j = nlohmann::json{{"id", r.id},           {"t0_image", r.t0_image}, {"t0_mask", r.t0_mask},
                     {"t1_image", r.t1_image}, {"t1_mask", r.t1_mask}, {"change", r.change},
                     {"events", r.events}};
}

void from_json(const nlohmann::json& j, BitemporalRecord& r) {
  r.id = j.at("id").get<std::string>();
  r.t0_image = j.at("t0_image").get<std::string>();
  r.t0_mask = j.at("t0_mask").get<std::string>();
  r.t1_image = j.at("t1_image").get<std::string>();
  r.t1_mask = j.at("t1_mask").get<std::string>();
  r.change = j.at("change").get<std::string>();
  r.events = j.value("events", std::string{});
}

std::vector<BitemporalRecord> read_bitemporal_manifest(const fs::path& manifest) {
  std::vector<BitemporalRecord> records;
  std::ifstream in(manifest);
  if (!in) return records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(nlohmann::json::parse(line).get<BitemporalRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw IngestionError(manifest.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

void append_bitemporal_record(const fs::path& manifest, const BitemporalRecord& record) {
  if (manifest.has_parent_path()) fs::create_directories(manifest.parent_path());
  std::ofstream out(manifest, std::ios::app);
  if (!out) throw IngestionError("cannot append to manifest " + manifest.string());
  out << nlohmann::json(record).dump() << '\n';
}

BitemporalTensors BitemporalTensors::select(const torch::Tensor& index) const {
  BitemporalTensors out;
  out.images_t = images_t.index_select(0, index);
  out.images_t1 = images_t1.index_select(0, index);
  out.masks_t = masks_t.index_select(0, index);
  out.masks_t1 = masks_t1.index_select(0, index);
  out.change = change.index_select(0, index);
  out.class_count = class_count;
  auto idx = index.to(torch::kInt64).contiguous();
  for (std::int64_t i = 0; i < idx.numel(); ++i) out.ids.push_back(ids.at(idx[i].item<std::int64_t>()));
  return out;
}

BitemporalTensors load_bitemporal(const fs::path& manifest, int class_count) {
  const auto records = read_bitemporal_manifest(manifest);
  if (records.empty()) throw IngestionError("empty or missing bitemporal manifest " + manifest.string());
  const fs::path base = manifest.parent_path();
  std::vector<ImageArray> im_t, im_t1;
  std::vector<SemanticMask> m_t, m_t1, change;
  BitemporalTensors out;
  out.class_count = class_count;
  for (const auto& r : records) {
    for (const auto* p : {&r.t0_image, &r.t1_image, &r.t0_mask, &r.t1_mask, &r.change}) {
      if (!fs::exists(base / *p)) {
        throw IngestionError("sample '" + r.id + "': missing file " + (base / *p).string());
      }
    }
    im_t.push_back(read_image(base / r.t0_image));
    im_t1.push_back(read_image(base / r.t1_image));
    m_t.push_back(read_mask(base / r.t0_mask, class_count));
    m_t1.push_back(read_mask(base / r.t1_mask, class_count));
    change.push_back(read_mask(base / r.change, 3));
    out.ids.push_back(r.id);
  }
  out.images_t = stack_images(im_t);
  out.images_t1 = stack_images(im_t1);
  out.masks_t = stack_masks(m_t);
  out.masks_t1 = stack_masks(m_t1);
  out.change = stack_masks(change);
  return out;
}

}  // namespace changen
