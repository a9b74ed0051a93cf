#include "changen/detector/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "changen/core/error.hpp"
#include "changen/gennet/checkpoint.hpp"
#include "changen/gennet/layers.hpp"

namespace fs = std::filesystem;
namespace F = torch::nn::functional;

namespace changen::det {

namespace {
constexpr int kStageBase[4] = {64, 128, 256, 512};
constexpr int kStride = 16;
const char* const kGroup = "detector";
const char* const kConfigBlob = "detector_config";
}  // namespace

void DetectorConfig::validate() const {
  if (class_count < 2 || class_count > 255) throw ConfigError("detector class_count must lie in [2, 255]");
  if (!(width_scale > 0.0)) throw ConfigError("detector width_scale must be positive");
  if (blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
  if (change_dim < 1) throw ConfigError("change_dim must be >= 1");
}

int DetectorConfig::stage_channels(int stage) const { return gen::scaled_channels(kStageBase[stage], width_scale); }

int DetectorConfig::neck_channels() const { return gen::scaled_channels(128, width_scale); }

std::uint64_t DetectorConfig::hash() const { return fnv1a(nlohmann::json(*this).dump()); }

void to_json(nlohmann::json& j, const DetectorConfig& c) {
  j = nlohmann::json{{"class_count", c.class_count},
                     {"width_scale", c.width_scale},
                     {"blocks_per_stage", c.blocks_per_stage},
                     {"change_dim", c.change_dim},
                     {"symmetric_inference", c.symmetric_inference}};
}

void from_json(const nlohmann::json& j, DetectorConfig& c) {
  const DetectorConfig d;
  c.class_count = j.value("class_count", d.class_count);
  c.width_scale = j.value("width_scale", d.width_scale);
  c.blocks_per_stage = j.value("blocks_per_stage", d.blocks_per_stage);
  c.change_dim = j.value("change_dim", d.change_dim);
  c.symmetric_inference = j.value("symmetric_inference", d.symmetric_inference);
}

namespace {

torch::nn::Conv2d conv(int in, int out, int k, int stride = 1) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(k / 2).bias(false));
}

}  // namespace

ResBlockImpl::ResBlockImpl(int in, int out, int stride) {
  conv1_ = register_module("conv1", conv(in, out, 3, stride));
  bn1_ = register_module("bn1", torch::nn::BatchNorm2d(out));
  conv2_ = register_module("conv2", conv(out, out, 3));
  bn2_ = register_module("bn2", torch::nn::BatchNorm2d(out));
  if (in != out || stride != 1) {
    down_ = register_module("down", conv(in, out, 1, stride));
    down_bn_ = register_module("down_bn", torch::nn::BatchNorm2d(out));
  }
}

torch::Tensor ResBlockImpl::forward(const torch::Tensor& x) {
  auto y = torch::relu(bn1_->forward(conv1_->forward(x)));
  y = bn2_->forward(conv2_->forward(y));
  auto skip = down_ ? down_bn_->forward(down_->forward(x)) : x;
  return torch::relu(y + skip);
}

DetectorImpl::DetectorImpl(DetectorConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const int c0 = cfg_.stage_channels(0);
  const int d = cfg_.neck_channels();
  stem_ = register_module("stem", conv(3, c0, 3, 2));
  stem_bn_ = register_module("stem_bn", torch::nn::BatchNorm2d(c0));
  int in = c0;
  for (int s = 0; s < 4; ++s) {
    torch::nn::Sequential stage;
    const int out = cfg_.stage_channels(s);
    for (int b = 0; b < cfg_.blocks_per_stage; ++b) {
      stage->push_back(ResBlock(b == 0 ? in : out, out, b == 0 && s > 0 ? 2 : 1));
    }
    stages_.push_back(register_module("stage" + std::to_string(s), stage));
    lateral_.push_back(register_module("lateral" + std::to_string(s),
                                       torch::nn::Conv2d(torch::nn::Conv2dOptions(out, d, 1))));
    in = out;
  }
  seg_head_ = register_module(
      "seg_head", torch::nn::Sequential(conv(d, d, 3), torch::nn::BatchNorm2d(d), torch::nn::ReLU(),
                                        torch::nn::Conv2d(torch::nn::Conv2dOptions(d, cfg_.class_count, 1))));
  const int dc = gen::scaled_channels(cfg_.change_dim, cfg_.width_scale);
  change_head_ = register_module(
      "change_head",
      torch::nn::Sequential(conv(2 * d, dc, 3), torch::nn::BatchNorm2d(dc), torch::nn::ReLU(), conv(dc, dc, 3),
                            torch::nn::BatchNorm2d(dc), torch::nn::ReLU(),
                            torch::nn::Conv2d(torch::nn::Conv2dOptions(dc, 1, 1))));
}

torch::Tensor DetectorImpl::embed(const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != 3) throw ShapeError("detector input must be [N, 3, H, W]");
  if (images.size(2) % kStride != 0 || images.size(3) % kStride != 0) {
    throw ShapeError("detector input sides must be multiples of 16");
  }
  auto x = torch::relu(stem_bn_->forward(stem_->forward(images)));
  std::vector<torch::Tensor> feats;
  for (auto& stage : stages_) {
    x = stage->forward(x);
    feats.push_back(x);
  }
  auto p = lateral_[3]->forward(feats[3]);
  for (int s = 2; s >= 0; --s) {
    p = F::interpolate(p, F::InterpolateFuncOptions().size(std::vector<std::int64_t>{feats[s].size(2), feats[s].size(3)})
                              .mode(torch::kNearest)) +
        lateral_[s]->forward(feats[s]);
  }
  return torch::relu(p);
}

namespace {

torch::Tensor upsample_to(const torch::Tensor& x, std::int64_t h, std::int64_t w) {
  return F::interpolate(
      x, F::InterpolateFuncOptions().size(std::vector<std::int64_t>{h, w}).mode(torch::kBilinear).align_corners(false));
}

}  // namespace

torch::Tensor DetectorImpl::segment(const torch::Tensor& features, std::int64_t h, std::int64_t w) {
  return upsample_to(seg_head_->forward(features), h, w);
}

torch::Tensor DetectorImpl::change_logits(const torch::Tensor& fa, const torch::Tensor& fb, std::int64_t h,
                                          std::int64_t w) {
  return upsample_to(change_head_->forward(torch::cat({fa, fb}, 1)), h, w).squeeze(1);
}

Detection DetectorImpl::forward(const torch::Tensor& image_t, const torch::Tensor& image_t1) {
  if (image_t.sizes() != image_t1.sizes()) throw ShapeError("detector inputs are not aligned");
  const auto n = image_t.size(0), h = image_t.size(2), w = image_t.size(3);
  auto f = embed(torch::cat({image_t, image_t1}));
  auto ft = f.slice(0, 0, n), ft1 = f.slice(0, n);
  auto logits = segment(f, h, w);
  Detection out;
  out.logits_t = logits.slice(0, 0, n);
  out.logits_t1 = logits.slice(0, n);
  auto forward_prob = torch::sigmoid(change_logits(ft, ft1, h, w));
  if (cfg_.symmetric_inference) {
    auto backward_prob = torch::sigmoid(change_logits(ft1, ft, h, w));
    out.change = (forward_prob + backward_prob) * 0.5;
  } else {
    out.change = forward_prob;
  }
  return out;
}

Detector make_detector(const DetectorConfig& cfg, std::uint64_t seed) {
  torch::manual_seed(seed);
  return Detector(cfg);
}

Detection detect(Detector& model, const torch::Tensor& image_t, const torch::Tensor& image_t1) {
  const bool single = image_t.dim() == 3;
  gen::EvalScope scope(*model);
  torch::NoGradGuard no_grad;
  auto d = model->forward(single ? image_t.unsqueeze(0) : image_t, single ? image_t1.unsqueeze(0) : image_t1);
  if (single) {
    d.change = d.change.squeeze(0);
    d.logits_t = d.logits_t.squeeze(0);
    d.logits_t1 = d.logits_t1.squeeze(0);
  }
  return d;
}

void PretrainConfig::validate() const {
  if (epochs < 0 || batch_size < 1) throw ConfigError("epochs must be >= 0 and batch_size >= 1");
  if (lr < 0.0 || momentum < 0.0 || weight_decay < 0.0 || gamma < 0.0) {
    throw ConfigError("optimizer settings must be non-negative");
  }
  if (color_jitter < 0.0 || seg_weight < 0.0 || change_weight < 0.0) {
    throw ConfigError("jitter and loss weights must be non-negative");
  }
}

void to_json(nlohmann::json& j, const PretrainConfig& c) {
  j = nlohmann::json{{"epochs", c.epochs},         {"batch_size", c.batch_size},
                     {"lr", c.lr},                 {"momentum", c.momentum},
                     {"weight_decay", c.weight_decay}, {"gamma", c.gamma},
                     {"flip", c.flip},             {"rotate", c.rotate},
                     {"transpose", c.transpose},   {"color_jitter", c.color_jitter},
                     {"seg_weight", c.seg_weight}, {"change_weight", c.change_weight}};
}

void from_json(const nlohmann::json& j, PretrainConfig& c) {
  const PretrainConfig d;
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr = j.value("lr", d.lr);
  c.momentum = j.value("momentum", d.momentum);
  c.weight_decay = j.value("weight_decay", d.weight_decay);
  c.gamma = j.value("gamma", d.gamma);
  c.flip = j.value("flip", d.flip);
  c.rotate = j.value("rotate", d.rotate);
  c.transpose = j.value("transpose", d.transpose);
  c.color_jitter = j.value("color_jitter", d.color_jitter);
  c.seg_weight = j.value("seg_weight", d.seg_weight);
  c.change_weight = j.value("change_weight", d.change_weight);
}

double poly_lr(double base, std::int64_t n, std::int64_t total, double gamma) {
  if (total <= 0 || n >= total) return 0.0;
  return base * std::pow(1.0 - static_cast<double>(n) / static_cast<double>(total), gamma);
}

DetectorBatch augment_batch(const DetectorBatch& batch, const PretrainConfig& cfg, Rng& rng) {
  const auto n = batch.images_t.size(0);
  const bool square = batch.images_t.size(2) == batch.images_t.size(3);
  std::vector<torch::Tensor> it, it1, mt, mt1, ch;
  for (std::int64_t i = 0; i < n; ++i) {
    std::vector<torch::Tensor> parts = {batch.images_t[i], batch.images_t1[i], batch.masks_t[i], batch.masks_t1[i],
                                        batch.change[i]};
    const bool hflip = cfg.flip && rng.bernoulli(0.5);
    const bool vflip = cfg.flip && rng.bernoulli(0.5);
    const int k = cfg.rotate && square ? rng.uniform_int(0, 3) : 0;
    const bool tr = cfg.transpose && square && rng.bernoulli(0.5);
    for (auto& p : parts) {
      if (hflip) p = p.flip({-1});
      if (vflip) p = p.flip({-2});
      if (k) p = torch::rot90(p, k, {-2, -1});
      if (tr) p = p.transpose(-2, -1);
    }
    for (int t = 0; t < 2 && cfg.color_jitter > 0.0; ++t) {
      const double contrast = 1.0 + rng.uniform(-cfg.color_jitter, cfg.color_jitter);
      const double bright = rng.uniform(-cfg.color_jitter, cfg.color_jitter);
      parts[t] = (parts[t] * contrast + bright).clamp(-1.0, 1.0);
    }
    it.push_back(parts[0]);
    it1.push_back(parts[1]);
    mt.push_back(parts[2]);
    mt1.push_back(parts[3]);
    ch.push_back(parts[4]);
  }
  return {torch::stack(it).contiguous(), torch::stack(it1).contiguous(), torch::stack(mt).contiguous(),
          torch::stack(mt1).contiguous(), torch::stack(ch).contiguous()};
}

torch::Tensor detector_loss(Detector& model, const DetectorBatch& batch, const PretrainConfig& cfg) {
  const auto n = batch.images_t.size(0), h = batch.images_t.size(2), w = batch.images_t.size(3);
  auto f = model->embed(torch::cat({batch.images_t, batch.images_t1}));
  auto ft = f.slice(0, 0, n), ft1 = f.slice(0, n);
  auto loss = torch::zeros({}, f.options());
  if (cfg.seg_weight > 0.0) {
    auto labels = torch::cat({batch.masks_t, batch.masks_t1}).to(torch::kInt64);
    if (labels.max().item<std::int64_t>() >= model->config().class_count) {
      throw ValidationError("mask labels exceed the detector's class count");
    }
    loss = loss + cfg.seg_weight * F::cross_entropy(model->segment(f, h, w), labels);
  }
  if (cfg.change_weight > 0.0) {
    // both orders through the same head, one normalization batch
    auto logits = model->change_logits(torch::cat({ft, ft1}), torch::cat({ft1, ft}), h, w);
    auto target = (batch.change != 0).to(logits.scalar_type());
    loss = loss + cfg.change_weight * F::binary_cross_entropy_with_logits(logits, torch::cat({target, target}));
  }
  return loss;
}

TrainReport train_detector(Detector& model, const BitemporalTensors& data, const PretrainConfig& cfg,
                           std::uint64_t seed, const fs::path& diverged_path,
                           const std::function<void(const EpochLog&)>& on_epoch) {
  cfg.validate();
  const auto n = data.size();
  if (n == 0) throw ValidationError("detector training set is empty");
  const std::int64_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::int64_t total = per_epoch * cfg.epochs;
  torch::optim::SGD opt(model->parameters(),
                        torch::optim::SGDOptions(cfg.lr).momentum(cfg.momentum).weight_decay(cfg.weight_decay));
  TrainReport report;
  model->train();
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (int e = 0; e < cfg.epochs; ++e) {
    Rng shuffle_rng(derive_seed(seed, {static_cast<std::uint64_t>(e), 0}));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());
    double sum = 0.0;
    double lr = 0.0;
    for (std::int64_t b = 0; b < per_epoch; ++b) {
      lr = poly_lr(cfg.lr, report.iterations, total, cfg.gamma);
      for (auto& group : opt.param_groups()) static_cast<torch::optim::SGDOptions&>(group.options()).lr(lr);
      const auto lo = b * cfg.batch_size, hi = std::min(n, lo + cfg.batch_size);
      auto idx = torch::tensor(std::vector<std::int64_t>(order.begin() + lo, order.begin() + hi));
      DetectorBatch batch{data.images_t.index_select(0, idx), data.images_t1.index_select(0, idx),
                          data.masks_t.index_select(0, idx), data.masks_t1.index_select(0, idx),
                          data.change.index_select(0, idx)};
      Rng aug_rng(derive_seed(seed, {static_cast<std::uint64_t>(report.iterations), 1}));
      auto loss = detector_loss(model, augment_batch(batch, cfg, aug_rng), cfg);
      if (!std::isfinite(loss.item<double>())) {
        if (!diverged_path.empty()) save_detector(diverged_path, model, static_cast<std::uint64_t>(report.iterations));
        throw TrainingError("non-finite detector loss at iteration " + std::to_string(report.iterations));
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
      sum += loss.item<double>() * static_cast<double>(hi - lo);
      ++report.iterations;
    }
    EpochLog log{e + 1, sum / static_cast<double>(n), lr};
    report.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  model->eval();
  return report;
}

TrainReport pretrain(Detector& model, const BitemporalTensors& synthetic, const PretrainConfig& cfg,
                     std::uint64_t seed, const fs::path& diverged_path,
                     const std::function<void(const EpochLog&)>& on_epoch) {
  return train_detector(model, synthetic, cfg, seed, diverged_path, on_epoch);
}

void to_json(nlohmann::json& j, const ChangeMetrics& m) {
  j = nlohmann::json{{"tp", m.tp},     {"fp", m.fp},   {"fn", m.fn},  {"tn", m.tn},
                     {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"iou", m.iou}};
}

ChangeMetrics metrics_from_counts(std::int64_t tp, std::int64_t fp, std::int64_t fn, std::int64_t tn) {
  if (tp < 0 || fp < 0 || fn < 0 || tn < 0) throw ValidationError("confusion counts must be non-negative");
  ChangeMetrics m{tp, fp, fn, tn};
  auto ratio = [](std::int64_t num, std::int64_t den, std::int64_t other_error) {
    if (den > 0) return static_cast<double>(num) / static_cast<double>(den);
    return other_error == 0 ? 1.0 : 0.0;
  };
  m.precision = ratio(tp, tp + fp, fn);
  m.recall = ratio(tp, tp + fn, fp);
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.iou = ratio(tp, tp + fp + fn, 0);
  return m;
}

ChangeMetrics evaluate(Detector& model, const BitemporalTensors& data, int batch_size) {
  const auto n = data.size();
  if (n == 0) throw ValidationError("evaluation set is empty");
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::int64_t i = 0; i < n; i += batch_size) {
    const auto hi = std::min<std::int64_t>(n, i + batch_size);
    auto d = detect(model, data.images_t.slice(0, i, hi), data.images_t1.slice(0, i, hi));
    auto pred = d.change > 0.5;
    auto truth = data.change.slice(0, i, hi) != 0;
    tp += (pred & truth).sum().item<std::int64_t>();
    fp += (pred & ~truth).sum().item<std::int64_t>();
    fn += (~pred & truth).sum().item<std::int64_t>();
    tn += (~pred & ~truth).sum().item<std::int64_t>();
  }
  return metrics_from_counts(tp, fp, fn, tn);
}

std::vector<std::int64_t> fine_tune_subset(std::int64_t n, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio <= 1.0)) throw ConfigError("ratio must lie in (0, 1]");
  // small epsilon keeps ratios like 0.05 * 100 from flooring to 4
  const auto count = static_cast<std::int64_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  if (count == 0) {
    throw ConfigError("ratio " + std::to_string(ratio) + " of " + std::to_string(n) + " samples selects nothing");
  }
  std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, {0x5ab5e7}));
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  idx.resize(static_cast<std::size_t>(count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

TrainReport fine_tune(Detector& model, const BitemporalTensors& data, double ratio, const PretrainConfig& cfg,
                      std::uint64_t seed, const fs::path& diverged_path,
                      const std::function<void(const EpochLog&)>& on_epoch) {
  auto subset = data.select(torch::tensor(fine_tune_subset(data.size(), ratio, seed)));
  return train_detector(model, subset, cfg, seed, diverged_path, on_epoch);
}

void save_detector(const fs::path& path, Detector& model, std::uint64_t iteration) {
  Checkpoint ckpt;
  ckpt.config_hash = model->config().hash();
  ckpt.iteration = iteration;
  ckpt.tensors[kGroup] = module_state(*model);
  ckpt.blobs[kConfigBlob] = nlohmann::json(model->config()).dump();
  save_checkpoint(path, ckpt);
}

Detector load_detector(const fs::path& path) {
  auto ckpt = load_checkpoint(path);
  DetectorConfig cfg;
  try {
    cfg = nlohmann::json::parse(ckpt.blob(kConfigBlob)).get<DetectorConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": bad detector config: " + e.what());
  }
  check_config_hash(ckpt, cfg.hash(), false);
  Detector model(cfg);
  load_module_state(*model, ckpt.group(kGroup));
  model->eval();
  return model;
}

}  // namespace changen::det
