#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "changen/core/dataset.hpp"
#include "changen/core/types.hpp"

namespace changen::eval {

/// Pluggable image embedding. Metrics consume its outputs only.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  /// images [N, 3, H, W] in [-1, 1] -> [N, d]
  virtual torch::Tensor features(const torch::Tensor& images) = 0;
  /// images -> [N, K] class probabilities; undefined tensor when unsupported.
  virtual torch::Tensor probabilities(const torch::Tensor& images) { (void)images; return {}; }
};

/// Fixed colour and texture statistics: per-channel mean and std, mean gradient
/// magnitude per channel, and channel means over a 4 x 4 grid (57 dims).
class ColorStatsExtractor : public FeatureExtractor {
 public:
  std::string name() const override { return "color"; }
  torch::Tensor features(const torch::Tensor& images) override;
};

/// Scene classes used to train the toy classifier: (pond present) x (many buildings).
inline constexpr int kSceneClasses = 4;
int scene_class(const SemanticMask& mask, int many_buildings = 4);

class ToyClassifierImpl : public torch::nn::Module {
 public:
  ToyClassifierImpl();
  /// Pooled 64-d embedding.
  torch::Tensor embed(const torch::Tensor& images);
  torch::Tensor forward(const torch::Tensor& images);

 private:
  torch::nn::Conv2d c1_{nullptr}, c2_{nullptr}, c3_{nullptr};
  torch::nn::Linear fc_{nullptr};
};
TORCH_MODULE(ToyClassifier);

struct ClassifierTrainConfig {
  int epochs = 10;
  int batch_size = 32;
  double lr = 1e-3;
};

/// Trains on a single-temporal dataset with labels from scene_class. Returns final accuracy
/// on the training set.
double train_classifier(ToyClassifier& model, const DatasetTensors& data, const ClassifierTrainConfig& cfg,
                        std::uint64_t seed);
void save_classifier(const std::filesystem::path& path, ToyClassifier& model);
ToyClassifier load_classifier(const std::filesystem::path& path);

class ClassifierExtractor : public FeatureExtractor {
 public:
  explicit ClassifierExtractor(ToyClassifier model) : model_(std::move(model)) {}
  std::string name() const override { return "toy-classifier"; }
  torch::Tensor features(const torch::Tensor& images) override;
  torch::Tensor probabilities(const torch::Tensor& images) override;

 private:
  ToyClassifier model_;
};

/// "color" or a path to a classifier checkpoint.
std::unique_ptr<FeatureExtractor> make_extractor(const std::string& spec);

/// All *.png images in a directory, sorted by name, as [N, 3, H, W].
torch::Tensor load_image_dir(const std::filesystem::path& dir);

}  // namespace changen::eval
