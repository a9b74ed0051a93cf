#include <cmath>

#include "changen/core/error.hpp"
#include "changen/core/toy.hpp"
#include "changen/detector/detector.hpp"
#include "support.hpp"

// after torch, whose logging header defines its own CHECK
#include <doctest.h>

using namespace changen;
using namespace changen::det;

namespace {

DetectorConfig small() {
  DetectorConfig c;
  c.class_count = 3;
  c.width_scale = 0.125;
  return c;
}

BitemporalTensors toy_pairs(const std::filesystem::path& dir, int count) {
  toy::SceneConfig sc;
  sc.size = 32;
  return load_bitemporal(toy::write_bitemporal(dir, count, sc, 3), 3);
}

}  // namespace

TEST_SUITE("detector") {

TEST_CASE("output shapes") {
  auto m = make_detector(small(), 1);
  auto d = detect(m, torch::rand({2, 3, 64, 48}), torch::rand({2, 3, 64, 48}));
  CHECK((d.change.sizes().vec() == std::vector<std::int64_t>{2, 64, 48}));
  CHECK((d.logits_t.sizes().vec() == std::vector<std::int64_t>{2, 3, 64, 48}));
  CHECK(((d.change >= 0) & (d.change <= 1)).all().item<bool>());
  auto single = detect(m, torch::rand({3, 32, 32}), torch::rand({3, 32, 32}));
  CHECK((single.change.sizes().vec() == std::vector<std::int64_t>{32, 32}));
  CHECK_THROWS_AS(detect(m, torch::rand({1, 3, 40, 40}), torch::rand({1, 3, 40, 40})), ShapeError);
  CHECK(small().stage_channels(3) == 64);
}

TEST_CASE("symmetric inference is exactly order invariant") {
  auto m = make_detector(small(), 2);
  auto a = torch::rand({2, 3, 32, 32}), b = torch::rand({2, 3, 32, 32});
  auto ab = detect(m, a, b), ba = detect(m, b, a);
  CHECK(torch::equal(ab.change, ba.change));
  CHECK(torch::equal(ab.logits_t, ba.logits_t1));
}

TEST_CASE("metrics from counts") {
  auto m = metrics_from_counts(50, 50, 50);
  CHECK(m.precision == doctest::Approx(0.5));
  CHECK(m.recall == doctest::Approx(0.5));
  CHECK(m.f1 == doctest::Approx(0.5));
  CHECK(m.iou == doctest::Approx(1.0 / 3.0));

  Rng rng(4);
  for (int i = 0; i < 200; ++i) {
    const int tp = rng.uniform_int(0, 1000), fp = rng.uniform_int(0, 1000), fn = rng.uniform_int(0, 1000);
    if (tp + fp + fn == 0) continue;
    auto r = metrics_from_counts(tp, fp, fn);
    CHECK(r.f1 == doctest::Approx(2.0 * tp / (2.0 * tp + fp + fn)));
    CHECK(r.iou == doctest::Approx(static_cast<double>(tp) / (tp + fp + fn)));
    CHECK(r.f1 == doctest::Approx(2 * r.iou / (1 + r.iou)));
  }
  auto empty = metrics_from_counts(0, 0, 0, 100);
  CHECK(empty.precision == 1.0);
  CHECK(empty.recall == 1.0);
  CHECK(empty.f1 == 1.0);
  auto missed = metrics_from_counts(0, 0, 10);
  CHECK(missed.precision == 0.0);
  CHECK(missed.recall == 0.0);
  CHECK(missed.f1 == 0.0);
}

TEST_CASE("poly schedule") {
  CHECK(poly_lr(0.03, 0, 100, 0.9) == doctest::Approx(0.03));
  CHECK(poly_lr(0.03, 50, 100, 0.9) == doctest::Approx(0.03 * std::pow(0.5, 0.9)));
  CHECK(poly_lr(0.03, 100, 100, 0.9) == 0.0);
  CHECK(poly_lr(0.03, 150, 100, 0.9) == 0.0);
}

TEST_CASE("fine-tune subsets") {
  auto s = fine_tune_subset(100, 0.05, 7);
  CHECK(s.size() == 5);
  CHECK(std::is_sorted(s.begin(), s.end()));
  CHECK(std::adjacent_find(s.begin(), s.end()) == s.end());
  CHECK(s == fine_tune_subset(100, 0.05, 7));
  CHECK(s != fine_tune_subset(100, 0.05, 8));
  CHECK(fine_tune_subset(10, 1.0, 1).size() == 10);
  CHECK(fine_tune_subset(1000, 0.001, 1).size() == 1);
  CHECK_THROWS_AS(fine_tune_subset(10, 0.05, 1), ConfigError);
}

TEST_CASE("zero learning rate leaves weights unchanged") {
  testing::ScratchDir dir("det_lr0");
  auto data = toy_pairs(dir.path(), 4);
  auto m = make_detector(small(), 3);
  PretrainConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = 2;
  cfg.lr = 0.0;
  cfg.weight_decay = 0.0;
  std::vector<torch::Tensor> before;
  for (auto& p : m->parameters()) before.push_back(p.clone());
  train_detector(m, data, cfg, 1);
  auto after = m->parameters();
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(torch::equal(before[i], after[i]));
}

TEST_CASE("pre-training reduces the loss and checkpoints round trip") {
  testing::ScratchDir dir("det_train");
  auto data = toy_pairs(dir.path() / "data", 16);
  auto m = make_detector(small(), 4);
  PretrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 4;
  auto report = pretrain(m, data, cfg, 2);
  REQUIRE(report.epochs.size() == 6);
  CHECK(report.iterations == 24);
  CHECK(report.epochs.back().loss < report.epochs.front().loss);
  CHECK(report.epochs.back().lr < report.epochs.front().lr);

  auto metrics = evaluate(m, data);
  CHECK(metrics.tp + metrics.fp + metrics.fn + metrics.tn == 16 * 32 * 32);

  save_detector(dir.path() / "det.ckpt", m, 24);
  auto back = load_detector(dir.path() / "det.ckpt");
  auto x = torch::rand({1, 3, 32, 32}), y = torch::rand({1, 3, 32, 32});
  CHECK(torch::equal(detect(m, x, y).change, detect(back, x, y).change));

  auto ft = fine_tune(back, data, 0.25, cfg, 5);
  CHECK(ft.iterations == 6);
}

TEST_CASE("augmented batches stay aligned") {
  testing::ScratchDir dir("det_aug");
  auto data = toy_pairs(dir.path(), 2);
  DetectorBatch b{data.images_t, data.images_t, data.masks_t, data.masks_t, data.change};
  PretrainConfig cfg;
  cfg.color_jitter = 0.0;
  Rng rng(9);
  for (int i = 0; i < 8; ++i) {
    auto out = augment_batch(b, cfg, rng);
    CHECK(torch::equal(out.images_t, out.images_t1));
    CHECK(torch::equal(out.masks_t, out.masks_t1));
    CHECK(out.change.sum().item<std::int64_t>() == data.change.sum().item<std::int64_t>());
  }
}

TEST_CASE("config json") {
  auto c = small();
  c.blocks_per_stage = 2;
  nlohmann::json j = c;
  auto back = j.get<DetectorConfig>();
  CHECK(back.hash() == c.hash());
  PretrainConfig p;
  nlohmann::json pj = p;
  CHECK(pj.get<PretrainConfig>().lr == 0.03);
  PretrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

}
