// changen: command-line front end for the change-data pipeline.

#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "changen/app/run_config.hpp"
#include "changen/core/error.hpp"
#include "changen/core/image_io.hpp"
#include "changen/core/toy.hpp"
#include "changen/core/visualize.hpp"
#include "changen/evalkit/extractors.hpp"
#include "changen/evalkit/metrics.hpp"
#include "changen/gennet/serialize.hpp"

namespace fs = std::filesystem;
using namespace changen;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c, bool out_required = true) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--seed", c.seed, "overrides the config seed");
  auto* o = cmd->add_option("--out", c.out, "output directory");
  if (out_required) o->required();
}

app::RunConfig resolve(const Common& c) {
  auto cfg = c.config.empty() ? app::parse_run_config(nlohmann::json::object()) : app::load_run_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  return cfg;
}

fs::path require(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("no ") + what + " given (flag or config)");
  return p;
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw IngestionError("cannot write " + path.string());
}

int run_make_toy(const Common& c, const std::string& kind, int count, int size) {
  auto cfg = resolve(c);
  toy::SceneConfig scene;
  scene.size = size;
  scene.class_count = std::max(cfg.class_count, 2);
  const auto manifest = kind == "bitemporal" ? toy::write_bitemporal(c.out, count, scene, cfg.seed)
                                             : toy::write_single_temporal(c.out, count, scene, cfg.seed);
  std::cout << nlohmann::json{{"manifest", manifest.string()}, {"count", count}}.dump() << '\n';
  return 0;
}

int run_simulate(const Common& c, std::string manifest, int n) {
  auto cfg = resolve(c);
  const auto ds = load_dataset(fs::current_path(), require(manifest.empty() ? cfg.data_manifest : fs::path(manifest),
                                                           "source manifest"));
  const fs::path out = c.out;
  for (const char* d : {"masks_t0", "masks_t1", "change", "events"}) fs::create_directories(out / d);
  std::ofstream index(out / "manifest.jsonl", std::ios::trunc);
  std::size_t written = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& item = ds.item(i);
    auto mask = read_mask(item.mask, ds.class_count());
    Rng rng(derive_seed(cfg.seed, {fnv1a(item.id)}));
    auto chain = eventsim::simulate_chain(mask, n, cfg.events, rng);
    SemanticMask prev = mask;
    for (int j = 1; j <= n; ++j) {
      const auto& step = chain[static_cast<std::size_t>(j - 1)];
      const auto id = datagen::sample_id(item.id, j);
      auto label = eventsim::derive_change_label(prev, step.mask, step.events);
      write_mask(out / "masks_t0" / (id + ".png"), prev);
      write_mask(out / "masks_t1" / (id + ".png"), step.mask);
      write_gray(out / "change" / (id + ".png"), label.height, label.width, label.codes);
      std::ofstream ev(out / "events" / (id + ".json"));
      ev << eventsim::event_log(step).dump(2) << '\n';
      index << nlohmann::json{{"id", id},
                              {"source", item.id},
                              {"mask_t", "masks_t0/" + id + ".png"},
                              {"mask_t1", "masks_t1/" + id + ".png"},
                              {"change", "change/" + id + ".png"},
                              {"events", "events/" + id + ".json"}}
                   .dump()
            << '\n';
      prev = step.mask;
      ++written;
    }
  }
  std::cout << nlohmann::json{{"samples", written}, {"manifest", (out / "manifest.jsonl").string()}}.dump() << '\n';
  return 0;
}

int run_train_gan(const Common& c, std::string manifest, const std::string& resume, bool force,
                  std::optional<int> iterations) {
  auto cfg = resolve(c);
  if (iterations) cfg.train.iterations = *iterations;
  const auto ds = load_dataset(fs::current_path(), require(manifest.empty() ? cfg.data_manifest : fs::path(manifest),
                                                           "training manifest"),
                               cfg.generator.class_count);
  const auto data = load_tensors(ds);
  adv::TrainState state(cfg.generator, cfg.discriminator, cfg.train, cfg.seed);
  if (!resume.empty()) adv::load_train_state(resume, state, force);
  fs::create_directories(c.out);
  write_json(fs::path(c.out) / "config.json", app::to_json(cfg));
  adv::TrainOptions opts{c.out, [](const adv::LossRecord& r) { std::cout << nlohmann::json(r).dump() << '\n'; }};
  adv::train(state, data, cfg.events, opts);
  gen::Generator g = adv::export_generator(state);
  gen::save_generator(fs::path(c.out) / "generator.ckpt", g, static_cast<std::uint64_t>(state.iteration));
  return 0;
}

int run_generate(const Common& c, const std::string& checkpoint, std::string manifest, std::optional<int> n,
                 std::optional<int> tile, bool force) {
  auto cfg = resolve(c);
  if (n) cfg.generate.n = *n;
  if (tile) cfg.generate.tile_size = *tile;
  auto g = gen::load_generator(checkpoint, std::nullopt, force);
  const auto ds = load_dataset(fs::current_path(), require(manifest.empty() ? cfg.data_manifest : fs::path(manifest),
                                                           "source manifest"),
                               g->config().class_count);
  const auto out = datagen::generate_dataset(ds, g, cfg.events, cfg.generate, c.out, cfg.seed,
                                             [](std::size_t done, std::size_t total) {
                                               std::cerr << "\r" << done << "/" << total << std::flush;
                                             });
  std::cerr << '\n';
  std::cout << nlohmann::json{{"manifest", out.string()}, {"samples", read_bitemporal_manifest(out).size()}}.dump()
            << '\n';
  return 0;
}

int run_eval_fid(const Common& c, const std::string& real_dir, const std::string& fake_dir, std::string extractor) {
  auto cfg = resolve(c);
  if (extractor.empty()) extractor = cfg.extractor;
  auto ex = eval::make_extractor(extractor);
  const auto real = eval::load_image_dir(real_dir);
  const auto fake = eval::load_image_dir(fake_dir);
  const auto report = eval::fid_report(eval::feature_stats(ex->features(real)), eval::feature_stats(ex->features(fake)));
  nlohmann::json j{{"extractor", ex->name()},
                   {"real", real.size(0)},
                   {"fake", fake.size(0)},
                   {"fid", report.value},
                   {"regularized", report.regularized}};
  if (report.regularized) std::cerr << "warning: covariance product was not PSD; eigenvalues floored\n";
  if (auto p = ex->probabilities(fake); p.defined()) j["inception_score"] = eval::inception_score(p);
  write_json(fs::path(c.out) / "fid.json", j);
  std::cout << j.dump() << '\n';
  return 0;
}

int run_norm_maps(const Common& c, const std::string& checkpoint, const std::string& image) {
  resolve(c);
  auto g = gen::load_generator(checkpoint);
  const auto maps = eval::feature_norm_map(gen::encode_image(read_image(image), g));
  fs::create_directories(c.out);
  for (std::size_t i = 0; i < maps.size(); ++i) {
    write_unit_map(fs::path(c.out) / ("level_" + std::to_string(i) + ".png"), maps[i].normalized);
  }
  std::cout << nlohmann::json{{"levels", maps.size()}, {"out", c.out}}.dump() << '\n';
  return 0;
}

int run_train_extractor(const Common& c, std::string manifest, int epochs) {
  auto cfg = resolve(c);
  const auto ds = load_dataset(fs::current_path(), require(manifest.empty() ? cfg.data_manifest : fs::path(manifest),
                                                           "training manifest"));
  eval::ToyClassifier model;
  torch::manual_seed(cfg.seed);
  eval::ClassifierTrainConfig tc;
  tc.epochs = epochs;
  const double acc = eval::train_classifier(model, load_tensors(ds), tc, cfg.seed);
  fs::create_directories(c.out);
  eval::save_classifier(fs::path(c.out) / "extractor.ckpt", model);
  std::cout << nlohmann::json{{"train_accuracy", acc}, {"checkpoint", (fs::path(c.out) / "extractor.ckpt").string()}}
                   .dump()
            << '\n';
  return 0;
}

auto epoch_printer(const fs::path& log_path) {
  auto log = std::make_shared<std::ofstream>(log_path, std::ios::app);
  return [log](const det::EpochLog& e) {
    const auto line = nlohmann::json{{"epoch", e.epoch}, {"loss", e.loss}, {"lr", e.lr}}.dump();
    *log << line << '\n' << std::flush;
    std::cout << line << '\n';
  };
}

int run_pretrain(const Common& c, std::string manifest) {
  auto cfg = resolve(c);
  const auto data = load_bitemporal(require(manifest.empty() ? cfg.synthetic_manifest : fs::path(manifest),
                                            "synthetic manifest"),
                                    cfg.detector.class_count);
  auto model = det::make_detector(cfg.detector, cfg.seed);
  fs::create_directories(c.out);
  det::pretrain(model, data, cfg.pretrain, cfg.seed, fs::path(c.out) / "diverged.ckpt",
                epoch_printer(fs::path(c.out) / "losses.jsonl"));
  det::save_detector(fs::path(c.out) / "detector.ckpt", model);
  return 0;
}

int run_eval_detector(const Common& c, const std::string& checkpoint, std::string manifest, bool zero_shot) {
  auto cfg = resolve(c);
  auto model = det::load_detector(checkpoint);
  const auto data = load_bitemporal(require(manifest.empty() ? cfg.benchmark_test : fs::path(manifest),
                                            "evaluation manifest"),
                                    model->config().class_count);
  nlohmann::json j = det::evaluate(model, data);
  j["mode"] = zero_shot ? "zero-shot" : "evaluate";
  j["samples"] = data.size();
  write_json(fs::path(c.out) / "metrics.json", j);
  std::cout << j.dump() << '\n';
  return 0;
}

int run_finetune(const Common& c, const std::string& checkpoint, std::string manifest, double ratio) {
  auto cfg = resolve(c);
  auto model = checkpoint.empty() ? det::make_detector(cfg.detector, cfg.seed) : det::load_detector(checkpoint);
  const auto data = load_bitemporal(require(manifest.empty() ? cfg.benchmark_train : fs::path(manifest),
                                            "fine-tuning manifest"),
                                    model->config().class_count);
  fs::create_directories(c.out);
  det::fine_tune(model, data, ratio, cfg.finetune, cfg.seed, fs::path(c.out) / "diverged.ckpt",
                 epoch_printer(fs::path(c.out) / "losses.jsonl"));
  det::save_detector(fs::path(c.out) / "detector.ckpt", model);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"changen: synthetic change-data pipeline"};
  cli.require_subcommand(1);
  Common common;
  std::string manifest, checkpoint, real_dir, fake_dir, extractor, resume, kind = "single", image;
  std::optional<int> n, tile, iterations;
  int count = 100, size = 64, epochs = 10;
  double ratio = 1.0;
  bool force = false, zero_shot = false;

  auto* toy_cmd = cli.add_subcommand("make-toy", "write a procedural toy dataset");
  add_common(toy_cmd, common);
  toy_cmd->add_option("--kind", kind, "single or bitemporal")->check(CLI::IsMember({"single", "bitemporal"}));
  toy_cmd->add_option("--count", count)->check(CLI::PositiveNumber);
  toy_cmd->add_option("--size", size)->check(CLI::PositiveNumber);

  auto* sim = cli.add_subcommand("simulate", "change event simulation over a mask dataset");
  add_common(sim, common);
  sim->add_option("--manifest", manifest, "single-temporal manifest");
  int sim_n = 1;
  sim->add_option("--n", sim_n, "events per source mask")->check(CLI::PositiveNumber);

  auto* train = cli.add_subcommand("train-gan", "bitemporal adversarial training");
  add_common(train, common);
  train->add_option("--manifest", manifest, "single-temporal manifest");
  train->add_option("--resume", resume, "training checkpoint to continue from");
  train->add_option("--iterations", iterations, "overrides train.iterations");
  train->add_flag("--force", force, "ignore config-hash mismatch on resume");

  auto* generate = cli.add_subcommand("generate", "synthesize a bitemporal dataset");
  add_common(generate, common);
  generate->add_option("--checkpoint", checkpoint, "generator or training checkpoint")->required();
  generate->add_option("--manifest", manifest, "single-temporal source manifest");
  generate->add_option("--n", n, "post-event samples per source");
  generate->add_option("--tile-size", tile, "tiled inference (multiple of 32); 0 = whole image");
  generate->add_flag("--force", force);

  auto* fid = cli.add_subcommand("eval-fid", "FID (and IS when the extractor classifies)");
  add_common(fid, common);
  fid->add_option("--real-dir", real_dir)->required();
  fid->add_option("--fake-dir", fake_dir)->required();
  fid->add_option("--extractor", extractor, "'color' or a classifier checkpoint");

  auto* norms = cli.add_subcommand("norm-maps", "export encoder feature norm maps");
  add_common(norms, common);
  norms->add_option("--checkpoint", checkpoint)->required();
  norms->add_option("--image", image)->required();

  auto* extract = cli.add_subcommand("train-extractor", "train the toy classifier used by eval-fid");
  add_common(extract, common);
  extract->add_option("--manifest", manifest);
  extract->add_option("--epochs", epochs)->check(CLI::PositiveNumber);

  auto* pre = cli.add_subcommand("pretrain-detector", "pre-train the change detector on synthetic pairs");
  add_common(pre, common);
  pre->add_option("--manifest", manifest, "bitemporal manifest");

  auto* evald = cli.add_subcommand("eval-detector", "change metrics of a detector");
  add_common(evald, common);
  evald->add_option("--checkpoint", checkpoint)->required();
  evald->add_option("--manifest", manifest, "bitemporal manifest with change labels");
  evald->add_flag("--zero-shot", zero_shot, "evaluate without any fine-tuning");

  auto* ft = cli.add_subcommand("finetune", "fine-tune on a ratio subset of a benchmark split");
  add_common(ft, common);
  ft->add_option("--checkpoint", checkpoint, "pre-trained detector; omitted = random init");
  ft->add_option("--manifest", manifest, "bitemporal training manifest");
  ft->add_option("--ratio", ratio)->check(CLI::Range(0.0, 1.0));

  CLI11_PARSE(cli, argc, argv);
  try {
    if (*toy_cmd) return run_make_toy(common, kind, count, size);
    if (*sim) return run_simulate(common, manifest, sim_n);
    if (*train) return run_train_gan(common, manifest, resume, force, iterations);
    if (*generate) return run_generate(common, checkpoint, manifest, n, tile, force);
    if (*fid) return run_eval_fid(common, real_dir, fake_dir, extractor);
    if (*norms) return run_norm_maps(common, checkpoint, image);
    if (*extract) return run_train_extractor(common, manifest, epochs);
    if (*pre) return run_pretrain(common, manifest);
    if (*evald) return run_eval_detector(common, checkpoint, manifest, zero_shot);
    if (*ft) return run_finetune(common, checkpoint, manifest, ratio);
  } catch (const changen::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
