#include "changen/core/toy.hpp"

#include <array>
#include <cmath>
#include <cstdio>

#include "changen/core/dataset.hpp"
#include "changen/core/error.hpp"
#include "changen/core/image_io.hpp"

namespace fs = std::filesystem;

namespace changen::toy {
namespace {

using Color = std::array<float, 3>;

struct Rect {
  int r0, c0, h, w;
  bool overlaps(const Rect& o, int margin) const {
    return r0 - margin < o.r0 + o.h && o.r0 - margin < r0 + h && c0 - margin < o.c0 + o.w &&
           o.c0 - margin < c0 + w;
  }
};

struct Building {
  Rect box;
  Color roof;
};

struct Pond {
  Rect box;
  Color water;
};

struct Wave {
  float fr, fc, phase, amp;
};

struct Layout {
  Color ground;
  std::array<Wave, 3> texture;
  std::vector<Building> buildings;
  std::vector<Pond> ponds;
};

/// Acquisition conditions: illumination, tint and sensor noise differ per date.
struct Style {
  float gain = 1.0f;
  float offset = 0.0f;
  Color tint{1.0f, 1.0f, 1.0f};
  float noise = 0.03f;
  float phase_shift = 0.0f;
};

int sample_building_side(const SceneConfig& cfg, Rng& rng) {
  const int lo = std::max(3, cfg.size / 12);
  const int hi = std::max(lo, cfg.size / 4);
  return rng.uniform_int(lo, hi);
}

bool fits(const Rect& r, const Layout& layout, int size) {
  if (r.r0 < 1 || r.c0 < 1 || r.r0 + r.h >= size - 1 || r.c0 + r.w >= size - 1) return false;
  for (const auto& b : layout.buildings)
    if (r.overlaps(b.box, 2)) return false;
  for (const auto& p : layout.ponds)
    if (r.overlaps(p.box, 2)) return false;
  return true;
}

bool add_building(Layout& layout, const SceneConfig& cfg, Rng& rng) {
  for (int attempt = 0; attempt < 40; ++attempt) {
    Rect r{0, 0, sample_building_side(cfg, rng), sample_building_side(cfg, rng)};
    r.r0 = rng.uniform_int(1, std::max(1, cfg.size - r.h - 2));
    r.c0 = rng.uniform_int(1, std::max(1, cfg.size - r.w - 2));
    if (!fits(r, layout, cfg.size)) continue;
    Color roof;
    if (rng.bernoulli(0.5)) {
      const float g = static_cast<float>(rng.uniform(0.55, 0.85));
      roof = {g, g, g * 0.97f};
    } else {
      roof = {static_cast<float>(rng.uniform(0.6, 0.8)), static_cast<float>(rng.uniform(0.3, 0.4)),
              static_cast<float>(rng.uniform(0.25, 0.35))};
    }
    layout.buildings.push_back({r, roof});
    return true;
  }
  return false;
}

Layout make_layout(const SceneConfig& cfg, Rng& rng) {
  Layout layout;
  layout.ground = {static_cast<float>(rng.uniform(0.25, 0.4)),
                   static_cast<float>(rng.uniform(0.35, 0.5)),
                   static_cast<float>(rng.uniform(0.15, 0.3))};
  for (auto& w : layout.texture) {
    w = {static_cast<float>(rng.uniform(0.02, 0.2)), static_cast<float>(rng.uniform(0.02, 0.2)),
         static_cast<float>(rng.uniform(0.0, 6.283)), static_cast<float>(rng.uniform(0.02, 0.06))};
  }
  if (cfg.class_count >= 3) {
    const int ponds = rng.uniform_int(0, cfg.max_ponds);
    for (int i = 0; i < ponds; ++i) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        Rect r{0, 0, rng.uniform_int(cfg.size / 8, cfg.size / 4),
               rng.uniform_int(cfg.size / 8, cfg.size / 3)};
        r.r0 = rng.uniform_int(1, std::max(1, cfg.size - r.h - 2));
        r.c0 = rng.uniform_int(1, std::max(1, cfg.size - r.w - 2));
        if (!fits(r, layout, cfg.size)) continue;
        layout.ponds.push_back({r, Color{0.1f, static_cast<float>(rng.uniform(0.2, 0.3)),
                                         static_cast<float>(rng.uniform(0.4, 0.55))}});
        break;
      }
    }
  }
  const int n = rng.uniform_int(cfg.min_buildings, cfg.max_buildings);
  for (int i = 0; i < n; ++i) add_building(layout, cfg, rng);
  return layout;
}

bool in_pond(const Pond& p, int r, int c) {
  const float cy = p.box.r0 + (p.box.h - 1) * 0.5f;
  const float cx = p.box.c0 + (p.box.w - 1) * 0.5f;
  const float dy = (r - cy) / (p.box.h * 0.5f);
  const float dx = (c - cx) / (p.box.w * 0.5f);
  return dy * dy + dx * dx <= 1.0f;
}

Scene render(const Layout& layout, const SceneConfig& cfg, const Style& style, Rng& rng) {
  const int n = cfg.size;
  std::vector<float> rgb(static_cast<std::size_t>(n) * n * 3);
  std::vector<Label> labels(static_cast<std::size_t>(n) * n, kBackground);
  auto px = [&](int r, int c) { return &rgb[(static_cast<std::size_t>(r) * n + c) * 3]; };

  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      float t = 0.0f;
      for (const auto& w : layout.texture) t += w.amp * std::sin(w.fr * r + w.fc * c + w.phase + style.phase_shift);
      for (int k = 0; k < 3; ++k) px(r, c)[k] = layout.ground[k] + t;
    }
  }
  for (const auto& p : layout.ponds) {
    for (int r = p.box.r0; r < p.box.r0 + p.box.h; ++r) {
      for (int c = p.box.c0; c < p.box.c0 + p.box.w; ++c) {
        if (!in_pond(p, r, c)) continue;
        for (int k = 0; k < 3; ++k) px(r, c)[k] = p.water[k];
        labels[static_cast<std::size_t>(r) * n + c] = 2;
      }
    }
  }
  for (const auto& b : layout.buildings) {
    const auto& x = b.box;
    // cast shadow one pixel below and right of the roof
    for (int r = x.r0 + 1; r <= x.r0 + x.h && r < n; ++r) {
      for (int c = x.c0 + 1; c <= x.c0 + x.w && c < n; ++c) {
        for (int k = 0; k < 3; ++k) px(r, c)[k] *= 0.45f;
      }
    }
    for (int r = x.r0; r < x.r0 + x.h; ++r) {
      for (int c = x.c0; c < x.c0 + x.w; ++c) {
        const float ridge = (c - x.c0 < x.w / 2) ? 1.0f : 0.88f;
        for (int k = 0; k < 3; ++k) px(r, c)[k] = b.roof[k] * ridge;
        labels[static_cast<std::size_t>(r) * n + c] = 1;
      }
    }
  }

  auto img = torch::empty({3, n, n});
  auto acc = img.accessor<float, 3>();
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      for (int k = 0; k < 3; ++k) {
        float v = (px(r, c)[k] * style.tint[k]) * style.gain + style.offset +
                  style.noise * static_cast<float>(rng.normal());
        v = std::clamp(v, 0.0f, 1.0f);
        // quantize so the in-memory scene equals what a PNG round trip yields
        acc[k][r][c] = std::round(v * 255.0f) / 127.5f - 1.0f;
      }
    }
  }
  return Scene{ImageArray(img), SemanticMask(n, n, cfg.class_count, std::move(labels))};
}

Style random_style(Rng& rng) {
  Style s;
  s.gain = static_cast<float>(rng.uniform(0.8, 1.2));
  s.offset = static_cast<float>(rng.uniform(-0.08, 0.08));
  for (auto& t : s.tint) t = static_cast<float>(rng.uniform(0.9, 1.1));
  s.noise = static_cast<float>(rng.uniform(0.015, 0.04));
  s.phase_shift = static_cast<float>(rng.uniform(-0.5, 0.5));
  return s;
}

void validate(const SceneConfig& cfg) {
  if (cfg.size < 16) throw ConfigError("toy scene size must be >= 16");
  if (cfg.class_count < 2) throw ConfigError("toy class count must be >= 2");
  if (cfg.min_buildings < 0 || cfg.max_buildings < cfg.min_buildings) {
    throw ConfigError("toy building counts must satisfy 0 <= min <= max");
  }
}

std::string numbered(const char* prefix, int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05d", prefix, i);
  return buf;
}

}  // namespace

Scene make_scene(const SceneConfig& cfg, Rng& rng) {
  validate(cfg);
  const auto layout = make_layout(cfg, rng);
  return render(layout, cfg, random_style(rng), rng);
}

ChangePair make_change_pair(const SceneConfig& cfg, Rng& rng) {
  validate(cfg);
  const auto before = make_layout(cfg, rng);
  Layout after = before;
  after.buildings.clear();
  for (const auto& b : before.buildings) {
    if (!rng.bernoulli(0.35)) after.buildings.push_back(b);
  }
  int added = rng.uniform_int(0, 3);
  if (after.buildings.size() == before.buildings.size() && added == 0) added = 1;
  for (int i = 0; i < added; ++i) add_building(after, cfg, rng);
  const auto style_t = random_style(rng);
  const auto style_t1 = random_style(rng);
  auto scene_t = render(before, cfg, style_t, rng);
  auto scene_t1 = render(after, cfg, style_t1, rng);
  return ChangePair{std::move(scene_t), std::move(scene_t1)};
}

fs::path write_single_temporal(const fs::path& out, int count, const SceneConfig& cfg,
                               std::uint64_t seed) {
  std::vector<DatasetItem> items;
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    const auto scene = make_scene(cfg, rng);
    const std::string id = numbered("scene_", i);
    DatasetItem item{id, out / "images" / (id + ".png"), out / "masks" / (id + ".png")};
    write_image(item.image, scene.image);
    write_mask(item.mask, scene.mask);
    items.push_back(std::move(item));
  }
  const auto manifest = out / "manifest.jsonl";
  write_dataset_manifest(manifest, items);
  return manifest;
}

fs::path write_bitemporal(const fs::path& out, int count, const SceneConfig& cfg,
                          std::uint64_t seed) {
  const auto manifest = out / "manifest.jsonl";
  fs::create_directories(out);
  fs::remove(manifest);
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    const auto pair = make_change_pair(cfg, rng);
    const std::string id = numbered("pair_", i);
    const std::string file = id + ".png";
    write_image(out / "t0" / file, pair.before.image);
    write_image(out / "t1" / file, pair.after.image);
    write_mask(out / "masks_t0" / file, pair.before.mask);
    write_mask(out / "masks_t1" / file, pair.after.mask);
    std::vector<std::uint8_t> change(pair.before.mask.size());
    for (std::size_t k = 0; k < change.size(); ++k) {
      const auto a = pair.before.mask.labels()[k];
      const auto b = pair.after.mask.labels()[k];
      change[k] = a == b ? 0 : (b != kBackground ? 1 : 2);
    }
    write_gray(out / "change" / file, cfg.size, cfg.size, change);
    append_bitemporal_record(manifest, BitemporalRecord{id, "t0/" + file, "masks_t0/" + file,
                                                        "t1/" + file, "masks_t1/" + file,
                                                        "change/" + file, ""});
  }
  return manifest;
}

}  // namespace changen::toy
