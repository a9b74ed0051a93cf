#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "changen/advtrain/augment.hpp"
#include "changen/advtrain/discriminator.hpp"
#include "changen/core/dataset.hpp"
#include "changen/eventsim/events.hpp"
#include "changen/gennet/checkpoint.hpp"
#include "changen/gennet/generator.hpp"

namespace changen::adv {

/// Optimisation settings of the bitemporal adversarial loop. Defaults are the full-scale
/// recipe; desk-scale runs override batch size, iterations and crop.
struct GanTrainConfig {
  int batch_size = 32;
  int iterations = 100000;
  double lr_g = 1e-4;
  double lr_d = 4e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  AugmentConfig augment;
  int checkpoint_every = 5000;
  int sample_every = 1000;
  int log_every = 50;
  bool ema = false;
  double ema_decay = 0.999;

  void validate() const;
};

void to_json(nlohmann::json& j, const GanTrainConfig& c);
void from_json(const nlohmann::json& j, GanTrainConfig& c);

struct LossRecord {
  std::int64_t step = 0;
  double g_loss = 0.0;
  double d_loss = 0.0;
  double wall_seconds = 0.0;
};

void to_json(nlohmann::json& j, const LossRecord& r);
void from_json(const nlohmann::json& j, LossRecord& r);

/// A training mini-batch holds only time-t data: pre-event images [N,3,H,W] and their
/// masks [N,H,W]. There is no post-event image anywhere in the training interface.
struct TrainBatch {
  torch::Tensor images_t;
  torch::Tensor masks_t;
};

/// Generator, discriminator, optimiser moments, iteration counter and loss history.
/// Every random draw of step n derives from (seed, n), so the seed plus the iteration is
/// the complete RNG state.
class TrainState {
 public:
  TrainState(const gen::GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg, const GanTrainConfig& tcfg,
             std::uint64_t seed);

  gen::Generator generator{nullptr};
  Discriminator discriminator{nullptr};
  std::unique_ptr<torch::optim::Adam> opt_g;
  std::unique_ptr<torch::optim::Adam> opt_d;
  std::int64_t iteration = 0;
  std::uint64_t seed = 0;
  std::vector<LossRecord> history;
  /// Order of parameter updates in the last step ("GD").
  std::string last_updates;
  /// Exponential moving average of generator tensors (empty unless cfg.ema).
  TensorDict ema;

  const gen::GeneratorConfig& generator_config() const { return gcfg_; }
  const DiscriminatorConfig& discriminator_config() const { return dcfg_; }
  const GanTrainConfig& train_config() const { return tcfg_; }
  /// Hash over all three configs; checkpoints refuse to resume across a mismatch.
  std::uint64_t config_hash() const;

  /// Changes both learning rates (used by tests and schedules).
  void set_learning_rates(double lr_g, double lr_d);

 private:
  gen::GeneratorConfig gcfg_;
  DiscriminatorConfig dcfg_;
  GanTrainConfig tcfg_;
};

/// Random mini-batch for the current iteration, augmented per sample.
TrainBatch sample_batch(const DatasetTensors& data, const TrainState& state);

struct StepResult {
  double g_loss = 0.0;
  double d_loss = 0.0;
  torch::Tensor masks_t1;
  torch::Tensor fake;
};

/// One iteration of bitemporal adversarial learning:
///   S_{t+1} = F(S_t); fake = G(S_{t+1}, I_t, S_t, z);
///   one generator update on g_loss; one discriminator update on d_loss with the time-t
///   pair (I_t, S_t) as the real target.
StepResult train_step(TrainState& state, const TrainBatch& batch, const eventsim::EventConfig& events);

struct TrainOptions {
  std::filesystem::path out;
  std::function<void(const LossRecord&)> on_log;
};

/// Runs train_step until state.iteration reaches the configured iteration count, writing
/// out/losses.jsonl, out/samples/step_*.png and out/checkpoints/{step_*,latest}.ckpt.
void train(TrainState& state, const DatasetTensors& data, const eventsim::EventConfig& events,
           const TrainOptions& options);

void save_train_state(const std::filesystem::path& path, const TrainState& state);
/// Restores a checkpoint into a state built from the same configs (hash-checked unless force).
void load_train_state(const std::filesystem::path& path, TrainState& state, bool force = false);

/// Generator holding the EMA weights (or a copy of the live weights when EMA is off).
gen::Generator export_generator(const TrainState& state);

}  // namespace changen::adv
