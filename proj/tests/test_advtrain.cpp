#include <cmath>
#include <map>

#include "changen/advtrain/augment.hpp"
#include "changen/advtrain/discriminator.hpp"
#include "changen/advtrain/losses.hpp"
#include "changen/advtrain/trainer.hpp"
#include "changen/core/error.hpp"
#include "changen/core/tensor.hpp"
#include "changen/core/toy.hpp"
#include "support.hpp"

// after torch, whose logging header defines its own CHECK
#include <doctest.h>

using namespace changen;
using namespace changen::adv;

namespace {

DatasetTensors toy_data(int count, int size, std::uint64_t seed) {
  toy::SceneConfig sc;
  sc.size = size;
  Rng rng(seed);
  std::vector<ImageArray> images;
  std::vector<SemanticMask> masks;
  DatasetTensors d;
  for (int i = 0; i < count; ++i) {
    auto s = toy::make_scene(sc, rng);
    images.push_back(s.image);
    masks.push_back(s.mask);
    d.ids.push_back("s" + std::to_string(i));
  }
  d.images = stack_images(images);
  d.masks = stack_masks(masks);
  d.class_count = sc.class_count;
  return d;
}

struct Setup {
  gen::GeneratorConfig g;
  DiscriminatorConfig d;
  GanTrainConfig t;
  Setup() {
    g.class_count = d.class_count = 3;
    g.width_scale = d.width_scale = 0.125;
    t.batch_size = 2;
    t.iterations = 3;
    t.augment.crop_size = 32;
  }
};

// Independent per-pixel weighted cross-entropy.
double ce_oracle(const torch::Tensor& logits, const torch::Tensor& labels, const std::vector<double>& w) {
  auto lsm = torch::log_softmax(logits.to(torch::kFloat64), 1);
  double num = 0.0, den = 0.0;
  for (int n = 0; n < labels.size(0); ++n)
    for (int y = 0; y < labels.size(1); ++y)
      for (int x = 0; x < labels.size(2); ++x) {
        const auto c = labels[n][y][x].item<std::int64_t>();
        const double wc = w.empty() ? 1.0 : w[static_cast<std::size_t>(c)];
        num -= wc * lsm[n][c][y][x].item<double>();
        den += wc;
      }
  return num / den;
}

double param_delta(torch::nn::Module& a, const TensorDict& before) {
  double d = 0.0;
  auto now = module_state(a);
  for (std::size_t i = 0; i < now.size(); ++i) d += (now[i].second - before[i].second).abs().sum().item<double>();
  return d;
}

bool same_state(const torch::nn::Module& a, const torch::nn::Module& b) {
  auto x = module_state(a), y = module_state(b);
  if (x.size() != y.size()) return false;
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!torch::equal(x[i].second, y[i].second)) return false;
  return true;
}

}  // namespace

TEST_SUITE("advtrain") {

TEST_CASE("class balance weights") {
  auto labels = torch::zeros({1, 10, 10}, torch::kInt64);
  labels[0][3][4] = 1;
  auto w = class_balance_weights(labels, 3);
  CHECK(w[0].item<double>() == doctest::Approx(100.0 / 99.0));
  CHECK(w[1].item<double>() == doctest::Approx(100.0));
  CHECK(w[2].item<double>() == 0.0);
  // the rare pixel and the 99 common ones contribute equally
  CHECK(w[1].item<double>() / w[0].item<double>() == doctest::Approx(99.0));
}

TEST_CASE("weighted cross entropy matches a per-pixel oracle") {
  torch::manual_seed(1);
  auto logits = torch::randn({2, 4, 5, 6});
  auto labels = torch::randint(0, 4, {2, 5, 6}, torch::kInt64);
  CHECK(weighted_cross_entropy(logits, labels).item<double>() == doctest::Approx(ce_oracle(logits, labels, {})));
  auto w = class_balance_weights(labels, 4);
  std::vector<double> wv;
  for (int c = 0; c < 4; ++c) wv.push_back(w[c].item<double>());
  CHECK(weighted_cross_entropy(logits, labels, w).item<double>() ==
        doctest::Approx(ce_oracle(logits, labels, wv)).epsilon(1e-5));
}

TEST_CASE("loss limits") {
  const int classes = 3;
  auto labels = torch::randint(0, classes, {2, 8, 8}, torch::kInt64);
  auto uniform = torch::zeros({2, classes + 1, 8, 8});
  CHECK(d_loss(uniform, labels, uniform, classes).item<double>() == doctest::Approx(std::log(classes + 1.0)));
  CHECK(g_loss(uniform, labels).item<double>() == doctest::Approx(std::log(classes + 1.0)));

  // a discriminator that is always right drives its loss to zero
  auto real = one_hot(labels, classes + 1).to(torch::kFloat32) * 50;
  auto fake = one_hot(torch::full({2, 8, 8}, classes, torch::kInt64), classes + 1).to(torch::kFloat32) * 50;
  CHECK(d_loss(real, labels, fake, classes).item<double>() < 1e-6);
  CHECK(g_loss(fake, labels).item<double>() > 10.0);
}

TEST_CASE("require_finite reports diverged losses") {
  CHECK_NOTHROW(require_finite(torch::tensor(1.0), "g", {}));
  auto act = torch::tensor({1.0, std::nan("")});
  CHECK_THROWS_AS(require_finite(torch::tensor(std::nan("")), "g", {{"fake", act}}), TrainingError);
  CHECK_THROWS_AS(require_finite(torch::tensor(INFINITY), "d", {}), TrainingError);
}

TEST_CASE("discriminator output shape") {
  DiscriminatorConfig cfg;
  cfg.class_count = 3;
  cfg.width_scale = 0.125;
  auto d = make_discriminator(cfg, 1);
  auto s = discriminate(ImageArray(torch::zeros({3, 64, 64})), d);
  CHECK((s.sizes().vec() == std::vector<std::int64_t>{64, 64, 4}));
  auto s2 = discriminate(ImageArray(torch::zeros({3, 128, 96})), d);
  CHECK((s2.sizes().vec() == std::vector<std::int64_t>{128, 96, 4}));
  CHECK_THROWS_AS(discriminate(ImageArray(torch::zeros({3, 40, 64})), d), ShapeError);
}

TEST_CASE("augmentation") {
  Rng mrng(3);
  auto mask = testing::random_mask(32, 32, 3, mrng);
  auto labels = to_tensor(mask);
  auto image = torch::rand({3, 32, 32});

  AugmentConfig off;
  off.flip = off.rotate = off.transpose = off.scale_jitter = false;
  off.crop_size = 0;
  Rng rng(4);
  auto [i0, l0] = augment(image, labels, off, rng);
  CHECK(torch::equal(i0, image));
  CHECK(torch::equal(l0, labels));

  AugmentConfig geo = off;
  geo.flip = geo.rotate = geo.transpose = true;
  std::map<std::int64_t, std::int64_t> before;
  for (auto v : std::vector<std::int64_t>(labels.data_ptr<std::int64_t>(), labels.data_ptr<std::int64_t>() + labels.numel()))
    before[v]++;
  for (int k = 0; k < 20; ++k) {
    auto [ia, la] = augment(image, labels, geo, rng);
    auto lc = la.contiguous();
    std::map<std::int64_t, std::int64_t> after;
    for (std::int64_t i = 0; i < lc.numel(); ++i) after[lc.data_ptr<std::int64_t>()[i]]++;
    CHECK(after == before);
    CHECK(std::get<0>(ia.flatten().sort()).equal(std::get<0>(image.flatten().sort())));
  }
  CHECK(torch::equal(torch::flip(torch::flip(image, {2}), {2}), image));

  AugmentConfig big = off;
  big.crop_size = 64;
  CHECK_THROWS_AS(augment(image, labels, big, rng), ValidationError);

  AugmentConfig crop = geo;
  crop.scale_jitter = true;
  crop.crop_size = 24;
  auto [ic, lc] = augment(image, labels, crop, rng);
  CHECK((ic.sizes().vec() == std::vector<std::int64_t>{3, 24, 24}));
  CHECK(lc.max().item<std::int64_t>() < 3);
}

TEST_CASE("train step updates and determinism") {
  Setup s;
  auto data = toy_data(6, 32, 9);
  eventsim::EventConfig events;

  SUBCASE("zero learning rate leaves parameters unchanged") {
    TrainState st(s.g, s.d, s.t, 5);
    st.set_learning_rates(0.0, 0.0);
    auto g0 = module_state(*st.generator);
    auto d0 = module_state(*st.discriminator);
    train_step(st, sample_batch(data, st), events);
    // spectral-norm vectors are buffers and move; parameters must not
    auto gp = st.generator->parameters();
    std::size_t i = 0;
    for (auto& [name, t] : g0) {
      if (name.ends_with(".u") || name.ends_with(".v")) continue;
      (void)t;
      ++i;
    }
    CHECK(i == gp.size());
    std::size_t k = 0;
    for (auto& [name, t] : g0) {
      if (name.ends_with(".u") || name.ends_with(".v")) continue;
      CHECK(torch::equal(t, gp[k++]));
    }
    std::size_t m = 0;
    auto dp = st.discriminator->parameters();
    for (auto& [name, t] : d0) {
      if (name.ends_with(".u") || name.ends_with(".v")) continue;
      CHECK(torch::equal(t, dp[m++]));
    }
    CHECK(st.last_updates == "GD");
    CHECK(st.iteration == 1);
  }

  SUBCASE("one step moves both networks") {
    TrainState st(s.g, s.d, s.t, 5);
    auto g0 = module_state(*st.generator);
    auto d0 = module_state(*st.discriminator);
    auto r = train_step(st, sample_batch(data, st), events);
    CHECK(param_delta(*st.generator, g0) > 0.0);
    CHECK(param_delta(*st.discriminator, d0) > 0.0);
    CHECK(std::isfinite(r.g_loss));
    CHECK(std::isfinite(r.d_loss));
    CHECK((r.fake.sizes().vec() == std::vector<std::int64_t>{2, 3, 32, 32}));
  }

  SUBCASE("same seed, same trajectory") {
    TrainState a(s.g, s.d, s.t, 8), b(s.g, s.d, s.t, 8);
    for (int i = 0; i < 4; ++i) {
      auto ra = train_step(a, sample_batch(data, a), events);
      auto rb = train_step(b, sample_batch(data, b), events);
      CHECK(ra.g_loss == rb.g_loss);
      CHECK(ra.d_loss == rb.d_loss);
    }
    CHECK(same_state(*a.generator, *b.generator));
    CHECK(same_state(*a.discriminator, *b.discriminator));
  }
}

TEST_CASE("batches carry only time-t data") {
  Setup s;
  auto data = toy_data(4, 32, 2);
  TrainState st(s.g, s.d, s.t, 1);
  auto b = sample_batch(data, st);
  CHECK((b.images_t.sizes().vec() == std::vector<std::int64_t>{2, 3, 32, 32}));
  CHECK((b.masks_t.sizes().vec() == std::vector<std::int64_t>{2, 32, 32}));
}

TEST_CASE("resume reproduces an uninterrupted run") {
  Setup s;
  auto data = toy_data(6, 32, 11);
  eventsim::EventConfig events;
  testing::ScratchDir dir("resume");

  TrainState straight(s.g, s.d, s.t, 21);
  for (int i = 0; i < 3; ++i) train_step(straight, sample_batch(data, straight), events);

  TrainState first(s.g, s.d, s.t, 21);
  for (int i = 0; i < 2; ++i) train_step(first, sample_batch(data, first), events);
  save_train_state(dir.path() / "state.ckpt", first);

  TrainState resumed(s.g, s.d, s.t, 21);
  load_train_state(dir.path() / "state.ckpt", resumed);
  CHECK(resumed.iteration == 2);
  CHECK(resumed.history.size() == first.history.size());
  train_step(resumed, sample_batch(data, resumed), events);
  CHECK(same_state(*straight.generator, *resumed.generator));
  CHECK(same_state(*straight.discriminator, *resumed.discriminator));

  auto other = s.t;
  other.lr_g = 5e-4;
  TrainState mismatched(s.g, s.d, other, 21);
  CHECK(mismatched.config_hash() != first.config_hash());
  CHECK_THROWS_AS(load_train_state(dir.path() / "state.ckpt", mismatched), CheckpointError);
  CHECK_NOTHROW(load_train_state(dir.path() / "state.ckpt", mismatched, true));

  // iteration budget is not part of the identity of a run
  auto longer = s.t;
  longer.iterations = 100;
  CHECK(TrainState(s.g, s.d, longer, 21).config_hash() == first.config_hash());
}

TEST_CASE("train writes logs, samples and checkpoints") {
  Setup s;
  s.t.iterations = 2;
  s.t.checkpoint_every = 1;
  s.t.sample_every = 1;
  s.t.log_every = 1;
  auto data = toy_data(4, 32, 3);
  testing::ScratchDir dir("train");
  TrainState st(s.g, s.d, s.t, 4);
  int logged = 0;
  train(st, data, {}, {dir.path(), [&](const LossRecord&) { ++logged; }});
  CHECK(logged == 2);
  CHECK(std::filesystem::exists(dir.path() / "losses.jsonl"));
  CHECK(std::filesystem::exists(dir.path() / "checkpoints" / "latest.ckpt"));
  CHECK(std::filesystem::exists(dir.path() / "samples" / "step_00000002.png"));
  auto g = export_generator(st);
  CHECK(same_state(*g, *st.generator));
}

TEST_CASE("train config json echoes defaults") {
  GanTrainConfig c;
  nlohmann::json j = c;
  auto back = j.get<GanTrainConfig>();
  CHECK(back.batch_size == 32);
  CHECK(back.lr_g == 1e-4);
  CHECK(back.lr_d == 4e-4);
  CHECK(back.beta1 == 0.0);
  CHECK(back.beta2 == 0.999);
  CHECK(nlohmann::json(back) == j);
  GanTrainConfig bad;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

}
