#include "changen/evalkit/extractors.hpp"

#include <algorithm>
#include <numeric>

#include "changen/core/error.hpp"
#include "changen/core/image_io.hpp"
#include "changen/core/rng.hpp"
#include "changen/core/tensor.hpp"
#include "changen/eventsim/instances.hpp"
#include "changen/gennet/checkpoint.hpp"

namespace fs = std::filesystem;

namespace changen::eval {

namespace {

constexpr int kBatch = 64;

template <typename F>
torch::Tensor batched(const torch::Tensor& images, F&& f) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("images must be [N, 3, H, W]");
  std::vector<torch::Tensor> parts;
  for (std::int64_t i = 0; i < images.size(0); i += kBatch) {
    parts.push_back(f(images.slice(0, i, std::min<std::int64_t>(i + kBatch, images.size(0)))));
  }
  return torch::cat(parts);
}

}  // namespace

torch::Tensor ColorStatsExtractor::features(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  return batched(images.to(torch::kFloat64), [](const torch::Tensor& x) {
    auto flat = x.flatten(2);
    auto mean = flat.mean(2);
    auto std = flat.std(2, false);
    auto gy = (x.slice(2, 1) - x.slice(2, 0, -1)).abs().flatten(2).mean(2);
    auto gx = (x.slice(3, 1) - x.slice(3, 0, -1)).abs().flatten(2).mean(2);
    auto grid = torch::adaptive_avg_pool2d(x, {4, 4}).flatten(1);
    return torch::cat({mean, std, 0.5 * (gx + gy), grid}, 1);
  });
}

int scene_class(const SemanticMask& mask, int many_buildings) {
  bool pond = false;
  for (auto v : mask.labels()) pond = pond || v == 2;
  int buildings = 0;
  for (const auto& inst : eventsim::extract_instances(mask)) buildings += inst.label == 1;
  return (pond ? 2 : 0) + (buildings >= many_buildings ? 1 : 0);
}

ToyClassifierImpl::ToyClassifierImpl() {
  using torch::nn::Conv2dOptions;
  c1_ = register_module("c1", torch::nn::Conv2d(Conv2dOptions(3, 16, 3).stride(2).padding(1)));
  c2_ = register_module("c2", torch::nn::Conv2d(Conv2dOptions(16, 32, 3).stride(2).padding(1)));
  c3_ = register_module("c3", torch::nn::Conv2d(Conv2dOptions(32, 64, 3).stride(2).padding(1)));
  fc_ = register_module("fc", torch::nn::Linear(64, kSceneClasses));
}

torch::Tensor ToyClassifierImpl::embed(const torch::Tensor& images) {
  auto x = torch::relu(c1_->forward(images));
  x = torch::relu(c2_->forward(x));
  x = torch::relu(c3_->forward(x));
  return x.mean({2, 3});
}

torch::Tensor ToyClassifierImpl::forward(const torch::Tensor& images) { return fc_->forward(embed(images)); }

double train_classifier(ToyClassifier& model, const DatasetTensors& data, const ClassifierTrainConfig& cfg,
                        std::uint64_t seed) {
  const auto n = data.images.size(0);
  if (n == 0) throw ValidationError("classifier training set is empty");
  std::vector<std::int64_t> labels;
  for (std::int64_t i = 0; i < n; ++i) labels.push_back(scene_class(mask_from_tensor(data.masks[i], data.class_count)));
  auto y = torch::tensor(labels, torch::kInt64);
  torch::optim::Adam opt(model->parameters(), torch::optim::AdamOptions(cfg.lr));
  Rng rng(seed);
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  model->train();
  for (int e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::int64_t i = 0; i < n; i += cfg.batch_size) {
      auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + i,
                                                         order.begin() + std::min<std::int64_t>(i + cfg.batch_size, n)));
      auto loss = torch::nn::functional::cross_entropy(model->forward(data.images.index_select(0, idx)),
                                                       y.index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }
  model->eval();
  torch::NoGradGuard no_grad;
  auto pred = batched(data.images, [&](const torch::Tensor& x) { return model->forward(x).argmax(1); });
  return pred.eq(y).to(torch::kFloat64).mean().item<double>();
}

void save_classifier(const fs::path& path, ToyClassifier& model) {
  Checkpoint ckpt;
  ckpt.config_hash = fnv1a("toy-classifier");
  ckpt.tensors["classifier"] = module_state(*model);
  save_checkpoint(path, ckpt);
}

ToyClassifier load_classifier(const fs::path& path) {
  auto ckpt = load_checkpoint(path);
  check_config_hash(ckpt, fnv1a("toy-classifier"), false);
  ToyClassifier model;
  load_module_state(*model, ckpt.group("classifier"));
  model->eval();
  return model;
}

torch::Tensor ClassifierExtractor::features(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  model_->eval();
  return batched(images, [&](const torch::Tensor& x) { return model_->embed(x.to(torch::kFloat32)); });
}

torch::Tensor ClassifierExtractor::probabilities(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  model_->eval();
  return batched(images, [&](const torch::Tensor& x) { return torch::softmax(model_->forward(x.to(torch::kFloat32)), 1); });
}

std::unique_ptr<FeatureExtractor> make_extractor(const std::string& spec) {
  if (spec == "color") return std::make_unique<ColorStatsExtractor>();
  if (!fs::exists(spec)) throw ConfigError("extractor must be 'color' or a classifier checkpoint, got '" + spec + "'");
  return std::make_unique<ClassifierExtractor>(load_classifier(spec));
}

torch::Tensor load_image_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IngestionError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw IngestionError("no .png images in " + dir.string());
  std::vector<torch::Tensor> images;
  for (const auto& f : files) images.push_back(read_image(f).tensor());
  return torch::stack(images);
}

}  // namespace changen::eval
