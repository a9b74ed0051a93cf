#include "changen/advtrain/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "changen/advtrain/losses.hpp"
#include "changen/core/error.hpp"
#include "changen/core/rng.hpp"
#include "changen/core/tensor.hpp"
#include "changen/core/visualize.hpp"
#include "changen/gennet/serialize.hpp"

namespace fs = std::filesystem;

namespace changen::adv {

void GanTrainConfig::validate() const {
  if (batch_size < 1 || iterations < 0) throw ConfigError("batch_size must be >= 1 and iterations >= 0");
  if (lr_g < 0.0 || lr_d < 0.0) throw ConfigError("learning rates must be non-negative");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("Adam betas must lie in [0, 1)");
  if (augment.crop_size < 0) throw ConfigError("crop_size must be >= 0");
  if (ema_decay < 0.0 || ema_decay > 1.0) throw ConfigError("ema_decay must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const GanTrainConfig& c) {
  j = nlohmann::json{{"batch_size", c.batch_size},
                     {"iterations", c.iterations},
                     {"lr_g", c.lr_g},
                     {"lr_d", c.lr_d},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"augment", c.augment},
                     {"checkpoint_every", c.checkpoint_every},
                     {"sample_every", c.sample_every},
                     {"log_every", c.log_every},
                     {"ema", c.ema},
                     {"ema_decay", c.ema_decay}};
}

void from_json(const nlohmann::json& j, GanTrainConfig& c) {
  const GanTrainConfig d;
  c.batch_size = j.value("batch_size", d.batch_size);
  c.iterations = j.value("iterations", d.iterations);
  c.lr_g = j.value("lr_g", d.lr_g);
  c.lr_d = j.value("lr_d", d.lr_d);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.augment = j.value("augment", d.augment);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.sample_every = j.value("sample_every", d.sample_every);
  c.log_every = j.value("log_every", d.log_every);
  c.ema = j.value("ema", d.ema);
  c.ema_decay = j.value("ema_decay", d.ema_decay);
}

void to_json(nlohmann::json& j, const LossRecord& r) {
  j = nlohmann::json{{"step", r.step}, {"g_loss", r.g_loss}, {"d_loss", r.d_loss}, {"wall_time", r.wall_seconds}};
}

void from_json(const nlohmann::json& j, LossRecord& r) {
  r.step = j.at("step").get<std::int64_t>();
  r.g_loss = j.at("g_loss").get<double>();
  r.d_loss = j.at("d_loss").get<double>();
  r.wall_seconds = j.value("wall_time", 0.0);
}

TrainState::TrainState(const gen::GeneratorConfig& gcfg, const DiscriminatorConfig& dcfg,
                       const GanTrainConfig& tcfg, std::uint64_t seed_value)
    : seed(seed_value), gcfg_(gcfg), dcfg_(dcfg), tcfg_(tcfg) {
  tcfg_.validate();
  if (gcfg_.class_count != dcfg_.class_count) {
    throw ConfigError("generator and discriminator disagree on the class count");
  }
  generator = gen::make_generator(gcfg_, derive_seed(seed, {0x6e}));
  discriminator = make_discriminator(dcfg_, derive_seed(seed, {0x64}));
  opt_g = std::make_unique<torch::optim::Adam>(
      generator->parameters(), torch::optim::AdamOptions(tcfg_.lr_g).betas({tcfg_.beta1, tcfg_.beta2}));
  opt_d = std::make_unique<torch::optim::Adam>(
      discriminator->parameters(), torch::optim::AdamOptions(tcfg_.lr_d).betas({tcfg_.beta1, tcfg_.beta2}));
}

std::uint64_t TrainState::config_hash() const {
  nlohmann::json t = tcfg_;
  // cadence settings may change between resumes
  for (const char* key : {"iterations", "checkpoint_every", "sample_every", "log_every"}) t.erase(key);
  return fnv1a(nlohmann::json{{"generator", gcfg_}, {"discriminator", dcfg_}, {"train", t}}.dump());
}

void TrainState::set_learning_rates(double lr_g, double lr_d) {
  for (auto& group : opt_g->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr_g);
  for (auto& group : opt_d->param_groups()) static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr_d);
}

TrainBatch sample_batch(const DatasetTensors& data, const TrainState& state) {
  if (!data.images.defined() || data.images.size(0) == 0) throw ValidationError("training dataset is empty");
  Rng rng(derive_seed(state.seed, {static_cast<std::uint64_t>(state.iteration), 0}));
  const auto& cfg = state.train_config();
  const int n = static_cast<int>(data.images.size(0));
  std::vector<torch::Tensor> images, masks;
  for (int b = 0; b < cfg.batch_size; ++b) {
    const int idx = rng.uniform_int(0, n - 1);
    auto [img, lab] = augment(data.images[idx], data.masks[idx], cfg.augment, rng);
    images.push_back(img);
    masks.push_back(lab);
  }
  return TrainBatch{torch::stack(images), torch::stack(masks)};
}

namespace {

void set_requires_grad(torch::nn::Module& module, bool flag) {
  for (auto& p : module.parameters()) p.set_requires_grad(flag);
}

void update_ema(TrainState& state) {
  const auto& cfg = state.train_config();
  if (!cfg.ema) return;
  if (state.ema.empty()) {
    state.ema = module_state(*state.generator);
    return;
  }
  torch::NoGradGuard no_grad;
  const auto live = module_state(*state.generator);
  for (std::size_t i = 0; i < live.size(); ++i) {
    auto& shadow = state.ema[i].second;
    if (live[i].first.rfind("param:", 0) == 0) {
      shadow.mul_(cfg.ema_decay).add_(live[i].second, 1.0 - cfg.ema_decay);
    } else {
      shadow.copy_(live[i].second);
    }
  }
}

}  // namespace

StepResult train_step(TrainState& state, const TrainBatch& batch, const eventsim::EventConfig& events) {
  const auto& images_t = batch.images_t;
  const auto& masks_t = batch.masks_t;
  if (images_t.dim() != 4 || masks_t.dim() != 3 || images_t.size(0) != masks_t.size(0) ||
      images_t.size(2) != masks_t.size(1) || images_t.size(3) != masks_t.size(2)) {
    throw ShapeError("training batch must hold aligned [N,3,H,W] images and [N,H,W] masks");
  }
  auto& G = state.generator;
  auto& D = state.discriminator;
  G->train();
  D->train();
  const auto dtype = G->dtype();
  const int classes = state.generator_config().class_count;

  // stochastic change event simulation
  Rng rng(derive_seed(state.seed, {static_cast<std::uint64_t>(state.iteration), 1}));
  std::vector<SemanticMask> next;
  for (std::int64_t b = 0; b < masks_t.size(0); ++b) {
    next.push_back(eventsim::simulate_event(mask_from_tensor(masks_t[b], classes), events, rng).mask);
  }
  StepResult result;
  result.masks_t1 = stack_masks(next);

  // semantic change synthesis
  auto noise_gen = torch_generator(derive_seed(state.seed, {static_cast<std::uint64_t>(state.iteration), 2}));
  auto noise = gen::sample_noise_batch(images_t.size(0), state.generator_config().noise_channels,
                                       static_cast<int>(images_t.size(2)), static_cast<int>(images_t.size(3)),
                                       noise_gen, dtype);
  auto real = images_t.to(dtype);
  auto fake = G->forward(result.masks_t1, real, masks_t, noise);

  state.last_updates.clear();
  // generator update; the discriminator is frozen
  set_requires_grad(*D, false);
  auto fake_logits = D->forward(fake);
  auto lg = g_loss(fake_logits, result.masks_t1);
  require_finite(lg, "generator loss", {{"fake", fake}, {"fake_logits", fake_logits}});
  state.opt_g->zero_grad();
  lg.backward();
  state.opt_g->step();
  state.last_updates.push_back('G');
  set_requires_grad(*D, true);
  update_ema(state);

  // discriminator update; real target is the time-t pair
  auto fake_detached = fake.detach();
  auto real_logits = D->forward(real);
  auto fake_logits_d = D->forward(fake_detached);
  auto ld = d_loss(real_logits, masks_t, fake_logits_d, state.discriminator_config().fake_class());
  require_finite(ld, "discriminator loss", {{"real_logits", real_logits}, {"fake_logits", fake_logits_d}});
  state.opt_d->zero_grad();
  ld.backward();
  state.opt_d->step();
  state.last_updates.push_back('D');

  ++state.iteration;
  result.g_loss = lg.item<double>();
  result.d_loss = ld.item<double>();
  result.fake = fake_detached;
  return result;
}

namespace {

std::string step_name(const char* prefix, std::int64_t step, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%08lld%s", prefix, static_cast<long long>(step), ext);
  return buf;
}

void write_samples(const fs::path& path, const TrainBatch& batch, const StepResult& r) {
  std::vector<std::vector<torch::Tensor>> rows;
  const auto n = std::min<std::int64_t>(4, batch.images_t.size(0));
  for (std::int64_t i = 0; i < n; ++i) {
    rows.push_back({batch.images_t[i], colorize_labels(batch.masks_t[i]), colorize_labels(r.masks_t1[i]),
                    r.fake[i].to(torch::kFloat32)});
  }
  write_grid(path, rows);
}

}  // namespace

void train(TrainState& state, const DatasetTensors& data, const eventsim::EventConfig& events,
           const TrainOptions& options) {
  const auto& cfg = state.train_config();
  const bool persist = !options.out.empty();
  std::ofstream log;
  if (persist) {
    fs::create_directories(options.out / "checkpoints");
    log.open(options.out / "losses.jsonl", std::ios::app);
  }
  const auto start = std::chrono::steady_clock::now();
  while (state.iteration < cfg.iterations) {
    auto batch = sample_batch(data, state);
    StepResult r;
    try {
      r = train_step(state, batch, events);
    } catch (const TrainingError&) {
      if (persist) save_train_state(options.out / "checkpoints" / "diverged.ckpt", state);
      throw;
    }
    LossRecord rec{state.iteration, r.g_loss, r.d_loss,
                   std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    state.history.push_back(rec);
    const bool last = state.iteration == cfg.iterations;
    if (cfg.log_every > 0 && (state.iteration % cfg.log_every == 0 || last)) {
      if (persist) log << nlohmann::json(rec).dump() << '\n' << std::flush;
      if (options.on_log) options.on_log(rec);
    }
    if (persist && cfg.sample_every > 0 && (state.iteration % cfg.sample_every == 0 || last)) {
      write_samples(options.out / "samples" / step_name("step_", state.iteration, ".png"), batch, r);
    }
    if (persist && cfg.checkpoint_every > 0 && state.iteration % cfg.checkpoint_every == 0) {
      save_train_state(options.out / "checkpoints" / step_name("step_", state.iteration, ".ckpt"), state);
    }
  }
  if (persist) save_train_state(options.out / "checkpoints" / "latest.ckpt", state);
}

void save_train_state(const fs::path& path, const TrainState& state) {
  Checkpoint ckpt;
  ckpt.config_hash = state.config_hash();
  ckpt.iteration = static_cast<std::uint64_t>(state.iteration);
  auto G = state.generator;
  gen::store_generator(ckpt, G);
  ckpt.tensors["discriminator"] = module_state(*state.discriminator);
  if (!state.ema.empty()) ckpt.tensors["ema"] = state.ema;
  ckpt.blobs["discriminator_config"] = nlohmann::json(state.discriminator_config()).dump();
  ckpt.blobs["train_config"] = nlohmann::json(state.train_config()).dump();
  ckpt.blobs["opt_g"] = optimizer_bytes(*state.opt_g);
  ckpt.blobs["opt_d"] = optimizer_bytes(*state.opt_d);
  ckpt.blobs["history"] = nlohmann::json(state.history).dump();
  ckpt.blobs["seed"] = std::to_string(state.seed);
  save_checkpoint(path, ckpt);
}

void load_train_state(const fs::path& path, TrainState& state, bool force) {
  const auto ckpt = load_checkpoint(path);
  check_config_hash(ckpt, state.config_hash(), force);
  load_module_state(*state.generator, ckpt.group(gen::kGeneratorGroup));
  load_module_state(*state.discriminator, ckpt.group("discriminator"));
  auto it = ckpt.tensors.find("ema");
  state.ema = it == ckpt.tensors.end() ? TensorDict{} : it->second;
  load_optimizer_bytes(*state.opt_g, ckpt.blob("opt_g"));
  load_optimizer_bytes(*state.opt_d, ckpt.blob("opt_d"));
  state.history = nlohmann::json::parse(ckpt.blob("history")).get<std::vector<LossRecord>>();
  state.seed = std::stoull(ckpt.blob("seed"));
  state.iteration = static_cast<std::int64_t>(ckpt.iteration);
}

gen::Generator export_generator(const TrainState& state) {
  gen::Generator g(state.generator_config());
  g->to(state.generator->dtype());
  load_module_state(*g, state.ema.empty() ? module_state(*state.generator) : state.ema);
  g->eval();
  return g;
}

}  // namespace changen::adv
