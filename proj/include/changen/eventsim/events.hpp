#pragma once

#include <optional>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "changen/core/rng.hpp"
#include "changen/core/types.hpp"
#include "changen/eventsim/instances.hpp"

namespace changen::eventsim {

enum class EventKind { Create, Remove };

enum class RotationPolicy { None, RightAngles, Free };

enum class PoolSource { SameMask, Global };

/// Free parameters of the change-event function.
struct EventConfig {
  double p_create = 0.5;
  double p_remove = 0.5;
  int k_min = 1;
  int k_max = 4;
  double scale_lo = 0.8;
  double scale_hi = 1.25;
  RotationPolicy rotation = RotationPolicy::RightAngles;
  int max_place_retries = 10;
  /// Fire create and remove independently (both may happen in one step).
  bool allow_mixed = false;
  PoolSource pool = PoolSource::SameMask;
  Connectivity connectivity = Connectivity::Eight;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

void to_json(nlohmann::json& j, const EventConfig& cfg);
void from_json(const nlohmann::json& j, EventConfig& cfg);

/// Geometry of a paste: where the transformed footprint's box starts, and how the source
/// instance was rotated and scaled to obtain it.
struct Placement {
  BoundingBox source;
  int row = 0;
  int col = 0;
  double rotation_deg = 0.0;
  double scale = 1.0;
  friend bool operator==(const Placement&, const Placement&) = default;
};

/// Remove: `instance` is the component that was erased.
/// Create: `instance` is the pasted footprint in absolute coordinates.
struct ChangeEvent {
  EventKind kind = EventKind::Remove;
  Instance instance;
  std::optional<Placement> placement;
  friend bool operator==(const ChangeEvent&, const ChangeEvent&) = default;
};

/// A create request that found no free spot within the retry budget.
struct SkipRecord {
  std::size_t pool_index = 0;
  int attempts = 0;
  friend bool operator==(const SkipRecord&, const SkipRecord&) = default;
};

struct EventResult {
  SemanticMask mask;
  std::vector<ChangeEvent> events;
  std::vector<SkipRecord> skipped;
};

/// Uniform instance count in [k_min, k_max], clamped to `available`.
int sample_instance_count(const EventConfig& cfg, int available, Rng& rng);

/// Relative pixel offsets of an instance after rotation and nearest-neighbour scaling.
/// Offsets are non-negative and tight against the origin.
std::vector<Pixel> transform_footprint(const Instance& instance, double rotation_deg,
                                       double scale);

/// Erases k distinct instances (sets them to background).
EventResult simulate_remove(const SemanticMask& mask, int k, Rng& rng,
                            Connectivity connectivity = Connectivity::Eight);

/// Pastes up to k transformed instances drawn from `pool` onto background area.
/// Footprints never overlap existing foreground or each other.
EventResult simulate_create(const SemanticMask& mask, std::span<const Instance> pool, int k,
                            const EventConfig& cfg, Rng& rng);

/// One application of the change-event function. The creation pool is the input mask's
/// own instances unless cfg.pool is Global, in which case `global_pool` is used.
EventResult simulate_event(const SemanticMask& mask, const EventConfig& cfg, Rng& rng,
                           std::span<const Instance> global_pool = {});

/// Markov chain of n events; element j is derived only from element j-1.
std::vector<EventResult> simulate_chain(const SemanticMask& mask, int n, const EventConfig& cfg,
                                        Rng& rng, std::span<const Instance> global_pool = {});

/// Re-applies an event log to a mask.
SemanticMask replay(const SemanticMask& mask, std::span<const ChangeEvent> events);

/// Per-pixel change codes: 0 unchanged, 1 created, 2 removed.
struct ChangeLabel {
  static constexpr std::uint8_t kUnchanged = 0;
  static constexpr std::uint8_t kCreate = 1;
  static constexpr std::uint8_t kRemove = 2;

  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> codes;

  std::vector<std::uint8_t> binary() const;
  std::size_t count(std::uint8_t code) const;
};

/// Paints event footprints (later events win) and zeroes every pixel whose label did not
/// change. Throws ShapeError on size mismatch and ValidationError when a changed pixel is
/// not explained by any event.
ChangeLabel derive_change_label(const SemanticMask& mask_t, const SemanticMask& mask_t1,
                                std::span<const ChangeEvent> events);

/// Event-log serialization. Footprints are stored as row runs [row, col, length].
void to_json(nlohmann::json& j, const ChangeEvent& e);
void from_json(const nlohmann::json& j, ChangeEvent& e);
void to_json(nlohmann::json& j, const SkipRecord& s);
void from_json(const nlohmann::json& j, SkipRecord& s);

/// {"events": [...], "skipped": [...]} for one step.
nlohmann::json event_log(const EventResult& result);

}  // namespace changen::eventsim
