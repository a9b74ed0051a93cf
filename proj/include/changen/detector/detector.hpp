#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "changen/core/dataset.hpp"
#include "changen/core/rng.hpp"

namespace changen::det {

struct DetectorConfig {
  int class_count = 2;
  double width_scale = 0.25;
  /// Residual blocks per stage; 2 gives the ResNet-18 layout.
  int blocks_per_stage = 1;
  /// Change-head width before width scaling.
  int change_dim = 96;
  /// Average both concatenation orders at inference (exactly order-invariant).
  bool symmetric_inference = true;

  void validate() const;
  int stage_channels(int stage) const;
  int neck_channels() const;
  std::uint64_t hash() const;
};

void to_json(nlohmann::json& j, const DetectorConfig& c);
void from_json(const nlohmann::json& j, DetectorConfig& c);

class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int in, int out, int stride);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv1_{nullptr}, conv2_{nullptr}, down_{nullptr};
  torch::nn::BatchNorm2d bn1_{nullptr}, bn2_{nullptr}, down_bn_{nullptr};
};
TORCH_MODULE(ResBlock);

struct Detection {
  torch::Tensor change;     // [N, H, W] probabilities
  torch::Tensor logits_t;   // [N, C, H, W]
  torch::Tensor logits_t1;  // [N, C, H, W]
};

/// Siamese 4-stage residual encoder with a light top-down neck, a per-time segmentation
/// head and a change head over concatenated bitemporal features.
class DetectorImpl : public torch::nn::Module {
 public:
  explicit DetectorImpl(DetectorConfig cfg);

  const DetectorConfig& config() const { return cfg_; }
  /// Shared encoder + neck: [N, 3, H, W] -> [N, D, H/2, W/2].
  torch::Tensor embed(const torch::Tensor& images);
  torch::Tensor segment(const torch::Tensor& features, std::int64_t h, std::int64_t w);
  /// Change logits for the (a, b) concatenation order, upsampled to h x w.
  torch::Tensor change_logits(const torch::Tensor& fa, const torch::Tensor& fb, std::int64_t h, std::int64_t w);

  Detection forward(const torch::Tensor& image_t, const torch::Tensor& image_t1);

 private:
  DetectorConfig cfg_;
  torch::nn::Conv2d stem_{nullptr};
  torch::nn::BatchNorm2d stem_bn_{nullptr};
  std::vector<torch::nn::Sequential> stages_;
  std::vector<torch::nn::Conv2d> lateral_;
  torch::nn::Sequential seg_head_{nullptr};
  torch::nn::Sequential change_head_{nullptr};
};
TORCH_MODULE(Detector);

Detector make_detector(const DetectorConfig& cfg, std::uint64_t seed);

/// Eval-mode inference on aligned batches or single images ([3, H, W] in, unbatched out).
Detection detect(Detector& model, const torch::Tensor& image_t, const torch::Tensor& image_t1);

struct PretrainConfig {
  int epochs = 20;
  int batch_size = 64;
  double lr = 0.03;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double gamma = 0.9;
  bool flip = true;
  bool rotate = true;
  bool transpose = true;
  /// Brightness/contrast jitter amplitude applied independently to each date; 0 disables.
  double color_jitter = 0.1;
  double seg_weight = 1.0;
  double change_weight = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const PretrainConfig& c);
void from_json(const nlohmann::json& j, PretrainConfig& c);

/// base * (1 - n / total)^gamma, clamped at 0 for n >= total.
double poly_lr(double base, std::int64_t n, std::int64_t total, double gamma);

/// Random geometric transform shared by both dates and labels plus per-date colour jitter.
struct DetectorBatch {
  torch::Tensor images_t, images_t1, masks_t, masks_t1, change;
};
DetectorBatch augment_batch(const DetectorBatch& batch, const PretrainConfig& cfg, Rng& rng);

/// Segmentation CE on both dates plus binary change BCE on both concatenation orders.
torch::Tensor detector_loss(Detector& model, const DetectorBatch& batch, const PretrainConfig& cfg);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  std::int64_t iterations = 0;
};

/// SGD with momentum and poly decay over epochs * ceil(N / batch) iterations. A non-finite
/// loss saves `diverged_path` (when set) and throws TrainingError.
TrainReport train_detector(Detector& model, const BitemporalTensors& data, const PretrainConfig& cfg,
                           std::uint64_t seed, const std::filesystem::path& diverged_path = {},
                           const std::function<void(const EpochLog&)>& on_epoch = {});

/// Pre-training on a synthetic bitemporal set.
TrainReport pretrain(Detector& model, const BitemporalTensors& synthetic, const PretrainConfig& cfg,
                     std::uint64_t seed, const std::filesystem::path& diverged_path = {},
                     const std::function<void(const EpochLog&)>& on_epoch = {});

struct ChangeMetrics {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0, iou = 0.0;
};

void to_json(nlohmann::json& j, const ChangeMetrics& m);

/// Precision, recall, F1 and IoU of the change class from pixel counts. A ratio whose
/// denominator is zero is 1 when the opposing error count is also zero, else 0.
ChangeMetrics metrics_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn, std::int64_t tn = 0);

/// Thresholded (0.5) change maps against the binary view of the change labels.
ChangeMetrics evaluate(Detector& model, const BitemporalTensors& data, int batch_size = 32);

/// floor(ratio * n) distinct indices chosen by `seed`, sorted ascending.
std::vector<std::int64_t> fine_tune_subset(std::int64_t n, double ratio, std::uint64_t seed);

TrainReport fine_tune(Detector& model, const BitemporalTensors& data, double ratio, const PretrainConfig& cfg,
                      std::uint64_t seed, const std::filesystem::path& diverged_path = {},
                      const std::function<void(const EpochLog&)>& on_epoch = {});

void save_detector(const std::filesystem::path& path, Detector& model, std::uint64_t iteration = 0);
Detector load_detector(const std::filesystem::path& path);

}  // namespace changen::det
