#include "changen/eventsim/events.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "changen/core/error.hpp"

namespace changen::eventsim {

NLOHMANN_JSON_SERIALIZE_ENUM(RotationPolicy, {{RotationPolicy::None, "none"},
                                              {RotationPolicy::RightAngles, "right_angles"},
                                              {RotationPolicy::Free, "free"}})
NLOHMANN_JSON_SERIALIZE_ENUM(PoolSource,
                             {{PoolSource::SameMask, "same_mask"}, {PoolSource::Global, "global"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Connectivity,
                             {{Connectivity::Four, 4}, {Connectivity::Eight, 8}})
NLOHMANN_JSON_SERIALIZE_ENUM(EventKind, {{EventKind::Create, "create"}, {EventKind::Remove, "remove"}})

void EventConfig::validate() const {
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(p_create) || !prob(p_remove)) throw ConfigError("event probabilities must lie in [0, 1]");
  if (!allow_mixed && p_create + p_remove > 1.0 + 1e-12) {
    throw ConfigError("p_create + p_remove must not exceed 1 unless allow_mixed is set");
  }
  if (k_min < 0 || k_min > k_max) throw ConfigError("instance counts must satisfy 0 <= k_min <= k_max");
  if (!(scale_lo > 0.0) || scale_hi < scale_lo) throw ConfigError("scale range must satisfy 0 < lo <= hi");
  if (max_place_retries < 1) throw ConfigError("max_place_retries must be >= 1");
}

void to_json(nlohmann::json& j, const EventConfig& c) {
  j = nlohmann::json{{"p_create", c.p_create},
                     {"p_remove", c.p_remove},
                     {"k_min", c.k_min},
                     {"k_max", c.k_max},
                     {"scale_range", {c.scale_lo, c.scale_hi}},
                     {"rotation", c.rotation},
                     {"max_place_retries", c.max_place_retries},
                     {"allow_mixed", c.allow_mixed},
                     {"pool", c.pool},
                     {"connectivity", c.connectivity}};
}

void from_json(const nlohmann::json& j, EventConfig& c) {
  const EventConfig d;
  c.p_create = j.value("p_create", d.p_create);
  c.p_remove = j.value("p_remove", d.p_remove);
  c.k_min = j.value("k_min", d.k_min);
  c.k_max = j.value("k_max", d.k_max);
  if (j.contains("scale_range")) {
    const auto& s = j.at("scale_range");
    c.scale_lo = s.at(0).get<double>();
    c.scale_hi = s.at(1).get<double>();
  }
  c.rotation = j.value("rotation", d.rotation);
  c.max_place_retries = j.value("max_place_retries", d.max_place_retries);
  c.allow_mixed = j.value("allow_mixed", d.allow_mixed);
  c.pool = j.value("pool", d.pool);
  c.connectivity = j.value("connectivity", d.connectivity);
}

int sample_instance_count(const EventConfig& cfg, int available, Rng& rng) {
  const int k = rng.uniform_int(cfg.k_min, cfg.k_max);
  return std::min(k, std::max(available, 0));
}

std::vector<Pixel> transform_footprint(const Instance& instance, double rotation_deg, double scale) {
  if (!(scale > 0.0)) throw ValidationError("scale must be positive");
  const int h = instance.bbox.height();
  const int w = instance.bbox.width();
  std::vector<char> grid(static_cast<std::size_t>(h) * w, 0);
  for (const auto& p : instance.pixels) {
    grid[static_cast<std::size_t>(p.row - instance.bbox.r0) * w + (p.col - instance.bbox.c0)] = 1;
  }
  auto src = [&](int r, int c) {
    return r >= 0 && c >= 0 && r < h && c < w && grid[static_cast<std::size_t>(r) * w + c];
  };

  std::vector<Pixel> out;
  const double turns = rotation_deg / 90.0;
  const bool right_angle = std::abs(turns - std::round(turns)) < 1e-9;
  if (right_angle) {
    const int q = ((static_cast<int>(std::lround(turns)) % 4) + 4) % 4;
    const int rh = (q % 2 == 0) ? h : w;
    const int rw = (q % 2 == 0) ? w : h;
    // rotated grid coordinate (r, c) -> source coordinate
    auto rotated = [&](int r, int c) {
      switch (q) {
        case 0: return src(r, c);
        case 1: return src(h - 1 - c, r);  // 90 deg clockwise
        case 2: return src(h - 1 - r, w - 1 - c);
        default: return src(c, w - 1 - r);
      }
    };
    const int oh = std::max(1, static_cast<int>(std::lround(rh * scale)));
    const int ow = std::max(1, static_cast<int>(std::lround(rw * scale)));
    for (int r = 0; r < oh; ++r) {
      const int sr = std::min(rh - 1, static_cast<int>(std::floor((r + 0.5) * rh / oh)));
      for (int c = 0; c < ow; ++c) {
        const int sc = std::min(rw - 1, static_cast<int>(std::floor((c + 0.5) * rw / ow)));
        if (rotated(sr, sc)) out.push_back(Pixel{r, c});
      }
    }
  } else {
    // Free angle: inverse-map every destination pixel centre through rotation and scale.
    const double theta = rotation_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(theta);
    const double sn = std::sin(theta);
    const double cy = h / 2.0;
    const double cx = w / 2.0;
    const double half_h = (std::abs(cs) * h + std::abs(sn) * w) * scale / 2.0;
    const double half_w = (std::abs(sn) * h + std::abs(cs) * w) * scale / 2.0;
    const int oh = std::max(1, static_cast<int>(std::ceil(2 * half_h)));
    const int ow = std::max(1, static_cast<int>(std::ceil(2 * half_w)));
    for (int r = 0; r < oh; ++r) {
      for (int c = 0; c < ow; ++c) {
        const double y = (r + 0.5 - oh / 2.0) / scale;
        const double x = (c + 0.5 - ow / 2.0) / scale;
        const double sy = cs * y + sn * x + cy;
        const double sx = -sn * y + cs * x + cx;
        if (src(static_cast<int>(std::floor(sy)), static_cast<int>(std::floor(sx)))) {
          out.push_back(Pixel{r, c});
        }
      }
    }
    if (out.empty()) out.push_back(Pixel{0, 0});
  }
  // tighten against the origin
  int r0 = out.front().row, c0 = out.front().col;
  for (const auto& p : out) {
    r0 = std::min(r0, p.row);
    c0 = std::min(c0, p.col);
  }
  for (auto& p : out) p = Pixel{p.row - r0, p.col - c0};
  return out;
}

EventResult simulate_remove(const SemanticMask& mask, int k, Rng& rng, Connectivity connectivity) {
  auto instances = extract_instances(mask, connectivity);
  if (k < 0 || k > static_cast<int>(instances.size())) {
    throw ValidationError("cannot remove " + std::to_string(k) + " of " +
                          std::to_string(instances.size()) + " instances");
  }
  EventResult result{mask, {}, {}};
  for (int i = 0; i < k; ++i) {
    const int pick = rng.uniform_int(i, static_cast<int>(instances.size()) - 1);
    std::swap(instances[i], instances[pick]);
    for (const auto& p : instances[i].pixels) result.mask.set(p, kBackground);
    result.events.push_back(ChangeEvent{EventKind::Remove, instances[i], std::nullopt});
  }
  return result;
}

namespace {

double sample_rotation(RotationPolicy policy, Rng& rng) {
  switch (policy) {
    case RotationPolicy::None: return 0.0;
    case RotationPolicy::RightAngles: return 90.0 * rng.uniform_int(0, 3);
    case RotationPolicy::Free: return rng.uniform(0.0, 360.0);
  }
  return 0.0;
}

}  // namespace

EventResult simulate_create(const SemanticMask& mask, std::span<const Instance> pool, int k,
                            const EventConfig& cfg, Rng& rng) {
  if (k < 0) throw ValidationError("instance count must be non-negative");
  EventResult result{mask, {}, {}};
  if (k == 0) return result;
  if (pool.empty()) throw ValidationError("creation needs a non-empty instance pool");

  for (int i = 0; i < k; ++i) {
    const auto index = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(pool.size()) - 1));
    const Instance& source = pool[index];
    const double rotation = sample_rotation(cfg.rotation, rng);
    const double scale = cfg.scale_lo == cfg.scale_hi ? cfg.scale_lo : rng.uniform(cfg.scale_lo, cfg.scale_hi);
    const auto footprint = transform_footprint(source, rotation, scale);
    int fh = 0, fw = 0;
    for (const auto& p : footprint) {
      fh = std::max(fh, p.row + 1);
      fw = std::max(fw, p.col + 1);
    }

    bool placed = false;
    int attempts = 0;
    for (; attempts < cfg.max_place_retries && !placed;) {
      ++attempts;
      if (fh > mask.height() || fw > mask.width()) continue;
      const int row = rng.uniform_int(0, mask.height() - fh);
      const int col = rng.uniform_int(0, mask.width() - fw);
      const bool clear = std::none_of(footprint.begin(), footprint.end(), [&](const Pixel& p) {
        return result.mask.is_foreground(row + p.row, col + p.col);
      });
      if (!clear) continue;
      std::vector<Pixel> pixels;
      pixels.reserve(footprint.size());
      for (const auto& p : footprint) {
        pixels.push_back(Pixel{row + p.row, col + p.col});
        result.mask.set(row + p.row, col + p.col, source.label);
      }
      result.events.push_back(ChangeEvent{EventKind::Create, make_instance(source.label, std::move(pixels)),
                                          Placement{source.bbox, row, col, rotation, scale}});
      placed = true;
    }
    if (!placed) result.skipped.push_back(SkipRecord{index, attempts});
  }
  return result;
}

EventResult simulate_event(const SemanticMask& mask, const EventConfig& cfg, Rng& rng,
                           std::span<const Instance> global_pool) {
  cfg.validate();
  const auto instances = extract_instances(mask, cfg.connectivity);
  std::span<const Instance> pool =
      cfg.pool == PoolSource::Global ? global_pool : std::span<const Instance>(instances);

  bool do_remove = false;
  bool do_create = false;
  if (cfg.allow_mixed) {
    do_remove = rng.bernoulli(cfg.p_remove);
    do_create = rng.bernoulli(cfg.p_create);
  } else if (cfg.p_remove >= 1.0) {
    do_remove = true;
  } else if (cfg.p_create >= 1.0) {
    do_create = true;
  } else if (cfg.p_remove + cfg.p_create > 0.0) {
    const double u = rng.uniform(0.0, 1.0);
    do_remove = u < cfg.p_remove;
    do_create = !do_remove && u < cfg.p_remove + cfg.p_create;
  }

  EventResult result{mask, {}, {}};
  if (do_remove) {
    const int k = sample_instance_count(cfg, static_cast<int>(instances.size()), rng);
    result = simulate_remove(mask, k, rng, cfg.connectivity);
  }
  if (do_create && !pool.empty()) {
    const int k = sample_instance_count(cfg, static_cast<int>(pool.size()), rng);
    auto created = simulate_create(result.mask, pool, k, cfg, rng);
    result.mask = std::move(created.mask);
    result.events.insert(result.events.end(), created.events.begin(), created.events.end());
    result.skipped = std::move(created.skipped);
  }
  return result;
}

std::vector<EventResult> simulate_chain(const SemanticMask& mask, int n, const EventConfig& cfg,
                                        Rng& rng, std::span<const Instance> global_pool) {
  if (n < 0) throw ValidationError("chain length must be non-negative");
  std::vector<EventResult> chain;
  chain.reserve(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const SemanticMask& previous = j == 0 ? mask : chain.back().mask;
    chain.push_back(simulate_event(previous, cfg, rng, global_pool));
  }
  return chain;
}

SemanticMask replay(const SemanticMask& mask, std::span<const ChangeEvent> events) {
  SemanticMask out = mask;
  for (const auto& e : events) {
    const Label label = e.kind == EventKind::Remove ? kBackground : e.instance.label;
    for (const auto& p : e.instance.pixels) {
      if (!out.contains(p.row, p.col)) throw ValidationError("event pixel outside the mask");
      out.set(p, label);
    }
  }
  return out;
}

std::vector<std::uint8_t> ChangeLabel::binary() const {
  std::vector<std::uint8_t> b(codes.size());
  std::transform(codes.begin(), codes.end(), b.begin(), [](auto v) { return v != kUnchanged ? 1 : 0; });
  return b;
}

std::size_t ChangeLabel::count(std::uint8_t code) const {
  return static_cast<std::size_t>(std::count(codes.begin(), codes.end(), code));
}

ChangeLabel derive_change_label(const SemanticMask& mask_t, const SemanticMask& mask_t1,
                                std::span<const ChangeEvent> events) {
  if (mask_t.height() != mask_t1.height() || mask_t.width() != mask_t1.width()) {
    throw ShapeError("change label needs equally sized masks");
  }
  ChangeLabel label{mask_t.height(), mask_t.width(), std::vector<std::uint8_t>(mask_t.size(), 0)};
  const int w = mask_t.width();
  for (const auto& e : events) {
    const auto code = e.kind == EventKind::Create ? ChangeLabel::kCreate : ChangeLabel::kRemove;
    for (const auto& p : e.instance.pixels) {
      if (!mask_t.contains(p.row, p.col)) throw ValidationError("event pixel outside the mask");
      label.codes[static_cast<std::size_t>(p.row) * w + p.col] = code;
    }
  }
  const auto a = mask_t.labels();
  const auto b = mask_t1.labels();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) {
      label.codes[i] = ChangeLabel::kUnchanged;
    } else if (label.codes[i] == ChangeLabel::kUnchanged) {
      throw ValidationError("pixel " + std::to_string(i) + " changed without a covering event");
    }
  }
  return label;
}

namespace {

nlohmann::json encode_runs(const std::vector<Pixel>& pixels) {
  nlohmann::json runs = nlohmann::json::array();
  std::size_t i = 0;
  while (i < pixels.size()) {
    std::size_t j = i + 1;
    while (j < pixels.size() && pixels[j].row == pixels[i].row &&
           pixels[j].col == pixels[j - 1].col + 1) {
      ++j;
    }
    runs.push_back({pixels[i].row, pixels[i].col, static_cast<int>(j - i)});
    i = j;
  }
  return runs;
}

std::vector<Pixel> decode_runs(const nlohmann::json& runs) {
  std::vector<Pixel> pixels;
  for (const auto& run : runs) {
    const int row = run.at(0).get<int>();
    const int col = run.at(1).get<int>();
    const int len = run.at(2).get<int>();
    for (int k = 0; k < len; ++k) pixels.push_back(Pixel{row, col + k});
  }
  return pixels;
}

}  // namespace

void to_json(nlohmann::json& j, const ChangeEvent& e) {
  const auto& b = e.instance.bbox;
  j = nlohmann::json{{"kind", e.kind},
                     {"label", e.instance.label},
                     {"area", e.instance.area()},
                     {"bbox", {b.r0, b.c0, b.r1, b.c1}},
                     {"pixels", encode_runs(e.instance.pixels)}};
  if (e.placement) {
    const auto& p = *e.placement;
    j["placement"] = {{"source_bbox", {p.source.r0, p.source.c0, p.source.r1, p.source.c1}},
                      {"row", p.row},
                      {"col", p.col},
                      {"rotation_deg", p.rotation_deg},
                      {"scale", p.scale}};
  }
}

void from_json(const nlohmann::json& j, ChangeEvent& e) {
  e.kind = j.at("kind").get<EventKind>();
  e.instance = make_instance(j.at("label").get<Label>(), decode_runs(j.at("pixels")));
  if (e.instance.area() != j.at("area").get<std::size_t>()) {
    throw ValidationError("event area does not match its pixel runs");
  }
  e.placement.reset();
  if (j.contains("placement")) {
    const auto& p = j.at("placement");
    const auto& s = p.at("source_bbox");
    e.placement = Placement{{s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>(), s.at(3).get<int>()},
                            p.at("row").get<int>(),
                            p.at("col").get<int>(),
                            p.at("rotation_deg").get<double>(),
                            p.at("scale").get<double>()};
  }
}

void to_json(nlohmann::json& j, const SkipRecord& s) {
  j = nlohmann::json{{"pool_index", s.pool_index}, {"attempts", s.attempts}};
}

void from_json(const nlohmann::json& j, SkipRecord& s) {
  s.pool_index = j.at("pool_index").get<std::size_t>();
  s.attempts = j.at("attempts").get<int>();
}

nlohmann::json event_log(const EventResult& result) {
  return nlohmann::json{{"events", result.events}, {"skipped", result.skipped}};
}

}  // namespace changen::eventsim
