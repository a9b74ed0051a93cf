#include "changen/datagen/datagen.hpp"

#include <fstream>
#include <map>
#include <set>

#include "changen/core/error.hpp"
#include "changen/core/image_io.hpp"
#include "changen/core/tensor.hpp"
#include "changen/core/tiling.hpp"
#include "changen/eventsim/instances.hpp"
#include "changen/gennet/config.hpp"

namespace fs = std::filesystem;

namespace changen::datagen {

void GenerateConfig::validate() const {
  if (n < 1) throw ConfigError("n must be >= 1");
  if (tile_size < 0 || tile_size % gen::kInputStride != 0) {
    throw ConfigError("tile_size must be 0 or a positive multiple of 32");
  }
}

void to_json(nlohmann::json& j, const GenerateConfig& c) {
  j = nlohmann::json{{"n", c.n},
                     {"conditioning", c.conditioning == ChainConditioning::Generated ? "generated" : "real"},
                     {"tile_size", c.tile_size}};
}

void from_json(const nlohmann::json& j, GenerateConfig& c) {
  c.n = j.value("n", 1);
  const auto mode = j.value("conditioning", std::string("generated"));
  if (mode == "generated") {
    c.conditioning = ChainConditioning::Generated;
  } else if (mode == "real") {
    c.conditioning = ChainConditioning::Real;
  } else {
    throw ConfigError("conditioning must be 'generated' or 'real', got '" + mode + "'");
  }
  c.tile_size = j.value("tile_size", 0);
}

int padded_extent(int extent, int multiple) { return (extent + multiple - 1) / multiple * multiple; }

namespace {

torch::Tensor pad_edges(const torch::Tensor& x, int h, int w) {
  // x: [C, H, W]
  const auto dh = h - x.size(1), dw = w - x.size(2);
  if (dh == 0 && dw == 0) return x;
  auto rows = torch::arange(h).clamp_max(x.size(1) - 1);
  auto cols = torch::arange(w).clamp_max(x.size(2) - 1);
  return x.index_select(1, rows).index_select(2, cols);
}

SemanticMask pad_mask(const SemanticMask& m, int h, int w) {
  auto t = pad_edges(to_tensor(m).unsqueeze(0), h, w).squeeze(0);
  return mask_from_tensor(t, m.class_count());
}

ImageArray run_generator(const SemanticMask& mask_t1, const ImageArray& image_t, const SemanticMask& mask_t,
                         const torch::Tensor& noise, gen::Generator& generator) {
  try {
    return gen::synthesize(mask_t1, image_t, mask_t, gen::NoiseMap{noise}, generator);
  } catch (const c10::Error& e) {
    const std::string what = e.what();
    if (what.find("alloc") != std::string::npos || what.find("memory") != std::string::npos) {
      throw Error("out of memory synthesizing " + std::to_string(image_t.height()) + "x" +
                  std::to_string(image_t.width()) + "; retry with tiling (tile_size)");
    }
    throw;
  } catch (const std::bad_alloc&) {
    throw Error("out of memory synthesizing " + std::to_string(image_t.height()) + "x" +
                std::to_string(image_t.width()) + "; retry with tiling (tile_size)");
  }
}

}  // namespace

ImageArray synthesize_any(const SemanticMask& mask_t1, const ImageArray& image_t, const SemanticMask& mask_t,
                          std::uint64_t noise_seed, gen::Generator& generator, int tile_size) {
  const int h = image_t.height(), w = image_t.width();
  if (mask_t1.height() != h || mask_t1.width() != w || mask_t.height() != h || mask_t.width() != w) {
    throw ShapeError("image and masks differ in size");
  }
  const int classes = generator->config().class_count;
  if (mask_t.max_label() >= classes || mask_t1.max_label() >= classes) {
    throw CheckpointError("mask labels exceed the generator's class count " + std::to_string(classes));
  }
  const int multiple = tile_size > 0 ? tile_size : gen::kInputStride;
  const int ph = padded_extent(h, multiple), pw = padded_extent(w, multiple);
  const auto noise = gen::sample_noise(generator->config().noise_channels, ph, pw, noise_seed).values;
  const auto m1 = pad_mask(mask_t1, ph, pw);
  const auto m0 = pad_mask(mask_t, ph, pw);
  const ImageArray img(pad_edges(image_t.tensor(), ph, pw));

  torch::Tensor full;
  if (tile_size == 0) {
    full = run_generator(m1, img, m0, noise, generator).tensor();
  } else {
    full = torch::empty({3, ph, pw});
    for (int r = 0; r < ph; r += tile_size) {
      for (int c = 0; c < pw; c += tile_size) {
        auto crop = [&](const torch::Tensor& t) {
          return t.slice(-2, r, r + tile_size).slice(-1, c, c + tile_size).contiguous();
        };
        auto tm1 = mask_from_tensor(crop(to_tensor(m1)), classes);
        auto tm0 = mask_from_tensor(crop(to_tensor(m0)), classes);
        auto out = run_generator(tm1, ImageArray(crop(img.tensor())), tm0, crop(noise), generator);
        full.slice(1, r, r + tile_size).slice(2, c, c + tile_size).copy_(out.tensor());
      }
    }
  }
  return ImageArray(full.slice(1, 0, h).slice(2, 0, w).contiguous());
}

double tiling_discrepancy(const SemanticMask& mask_t1, const ImageArray& image_t, const SemanticMask& mask_t,
                          std::uint64_t noise_seed, gen::Generator& generator, int tile_size) {
  if (tile_size <= 0) throw ConfigError("tile_size must be positive");
  // both paths see the same noise only when the padded canvases agree
  if (padded_extent(image_t.height(), tile_size) != padded_extent(image_t.height(), gen::kInputStride) ||
      padded_extent(image_t.width(), tile_size) != padded_extent(image_t.width(), gen::kInputStride)) {
    throw ShapeError("tile_size must divide the padded image size");
  }
  auto whole = synthesize_any(mask_t1, image_t, mask_t, noise_seed, generator, 0);
  auto tiled = synthesize_any(mask_t1, image_t, mask_t, noise_seed, generator, tile_size);
  return (whole.tensor() - tiled.tensor()).abs().mean().item<double>();
}

std::vector<BitemporalSample> sample_scp(const ImageArray& image_t, const SemanticMask& mask_t,
                                         gen::Generator& generator, const eventsim::EventConfig& events,
                                         Rng& rng, int n, const GenerateConfig& cfg,
                                         std::span<const eventsim::Instance> global_pool) {
  if (n < 1) throw ConfigError("n must be >= 1");
  std::vector<BitemporalSample> chain;
  ImageArray prev_image = image_t;
  SemanticMask prev_mask = mask_t;
  for (int j = 1; j <= n; ++j) {
    auto ev = eventsim::simulate_event(prev_mask, events, rng, global_pool);
    const std::uint64_t noise_seed = rng.next();
    const bool real = cfg.conditioning == ChainConditioning::Real;
    auto next_image = synthesize_any(ev.mask, real ? image_t : prev_image, real ? mask_t : prev_mask, noise_seed,
                                     generator, cfg.tile_size);
    BitemporalSample s;
    s.image_t = prev_image;
    s.image_t1 = next_image;
    s.mask_t = prev_mask;
    s.mask_t1 = ev.mask;
    s.change = eventsim::derive_change_label(prev_mask, ev.mask, ev.events);
    s.events = std::move(ev);
    prev_image = s.image_t1;
    prev_mask = s.mask_t1;
    chain.push_back(std::move(s));
  }
  return chain;
}

std::string sample_id(const std::string& source_id, int step) { return source_id + "_s" + std::to_string(step); }

namespace {

struct Layout {
  fs::path root;
  fs::path manifest() const { return root / "manifest.jsonl"; }
};

// Parses the manifest, tolerating a torn final line from an interrupted run.
std::vector<BitemporalRecord> read_existing(const fs::path& manifest) {
  std::vector<BitemporalRecord> records;
  std::ifstream in(manifest);
  if (!in) return records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      records.push_back(nlohmann::json::parse(line).get<BitemporalRecord>());
    } catch (const nlohmann::json::exception&) {
      if (in.peek() != EOF) throw IngestionError("corrupt record in " + manifest.string());
    }
  }
  return records;
}

void rewrite_manifest(const fs::path& manifest, const std::vector<BitemporalRecord>& records) {
  const auto tmp = fs::path(manifest.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
    if (!out) throw IngestionError("cannot write " + tmp.string());
  }
  fs::rename(tmp, manifest);
}

BitemporalRecord write_sample(const fs::path& root, const std::string& id, const BitemporalSample& s) {
  BitemporalRecord r{id,
                     "t0/" + id + ".png",
                     "masks_t0/" + id + ".png",
                     "t1/" + id + ".png",
                     "masks_t1/" + id + ".png",
                     "change/" + id + ".png",
                     "events/" + id + ".json"};
  write_image(root / r.t0_image, s.image_t);
  write_image(root / r.t1_image, s.image_t1);
  write_mask(root / r.t0_mask, s.mask_t);
  write_mask(root / r.t1_mask, s.mask_t1);
  write_gray(root / r.change, s.change.height, s.change.width, s.change.codes);
  std::ofstream ev(root / r.events);
  ev << eventsim::event_log(s.events).dump() << '\n';
  if (!ev) throw IngestionError("cannot write " + (root / r.events).string());
  return r;
}

}  // namespace

std::filesystem::path generate_dataset(const SingleTemporalDataset& dataset, gen::Generator& generator,
                                       const eventsim::EventConfig& events, const GenerateConfig& cfg,
                                       const fs::path& out, std::uint64_t seed,
                                       const std::function<void(std::size_t, std::size_t)>& progress) {
  cfg.validate();
  events.validate();
  for (const char* dir : {"t0", "t1", "masks_t0", "masks_t1", "change", "events"}) fs::create_directories(out / dir);
  const Layout layout{out};

  // resume: keep sources whose n records are all present, drop partial ones
  auto existing = read_existing(layout.manifest());
  std::set<std::string> present;
  for (const auto& r : existing) present.insert(r.id);
  std::set<std::string> complete;
  for (const auto& item : dataset.items()) {
    bool all = true;
    for (int j = 1; j <= cfg.n && all; ++j) all = present.count(sample_id(item.id, j)) > 0;
    if (all) complete.insert(item.id);
  }
  std::set<std::string> keep_ids;
  for (const auto& id : complete) {
    for (int j = 1; j <= cfg.n; ++j) keep_ids.insert(sample_id(id, j));
  }
  std::vector<BitemporalRecord> kept;
  std::set<std::string> seen;
  for (const auto& r : existing) {
    if (keep_ids.count(r.id) && seen.insert(r.id).second) kept.push_back(r);
  }
  if (kept.size() != existing.size() || !fs::exists(layout.manifest())) rewrite_manifest(layout.manifest(), kept);

  std::vector<eventsim::Instance> pool;
  if (events.pool == eventsim::PoolSource::Global) {
    for (std::size_t i = 0; i < dataset.size(); ++i) {
      auto inst = eventsim::extract_instances(dataset.load(i).second, events.connectivity);
      pool.insert(pool.end(), inst.begin(), inst.end());
    }
  }

  std::size_t done = 0;
  for (const auto& item : dataset.items()) {
    ++done;
    if (complete.count(item.id)) continue;
    auto [image, mask] = dataset.load(done - 1);
    Rng rng(derive_seed(seed, {fnv1a(item.id)}));
    auto chain = sample_scp(image, mask, generator, events, rng, cfg.n, cfg, pool);
    std::string lines;
    for (int j = 1; j <= cfg.n; ++j) {
      lines += nlohmann::json(write_sample(out, sample_id(item.id, j), chain[j - 1])).dump() + '\n';
    }
    // one append per source keeps partial sources detectable on resume
    std::ofstream m(layout.manifest(), std::ios::app);
    m << lines << std::flush;
    if (!m) throw IngestionError("cannot append to " + layout.manifest().string());
    if (progress) progress(done, dataset.size());
  }
  return layout.manifest();
}

}  // namespace changen::datagen
