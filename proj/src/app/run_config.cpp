#include "changen/app/run_config.hpp"

#include <fstream>
#include <set>

#include "changen/core/error.hpp"

namespace fs = std::filesystem;

namespace changen::app {

namespace {

const std::set<std::string> kSections = {"seed",    "class_count", "data",    "events",   "generator",
                                         "discriminator", "train", "generate", "detector", "pretrain",
                                         "finetune", "eval"};

fs::path resolve(const nlohmann::json& j, const char* key, const fs::path& base) {
  if (!j.contains(key)) return {};
  fs::path p = j.at(key).get<std::string>();
  return p.is_relative() && !base.empty() ? base / p : p;
}

template <typename T>
T section(const nlohmann::json& doc, const char* key, int class_count, bool has_classes) {
  nlohmann::json j = doc.value(key, nlohmann::json::object());
  if (!j.is_object()) throw ConfigError(std::string("section '") + key + "' must be an object");
  if constexpr (requires(T t) { t.class_count; }) {
    if (has_classes && !j.contains("class_count")) j["class_count"] = class_count;
  }
  return j.get<T>();
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("config root must be an object");
  for (const auto& [key, value] : doc.items()) {
    if (!kSections.count(key)) throw ConfigError("unknown config section '" + key + "'");
  }
  RunConfig cfg;
  try {
    cfg.seed = doc.value("seed", std::uint64_t{0});
    const bool has_classes = doc.contains("class_count");
    cfg.class_count = doc.value("class_count", 2);
    const auto data = doc.value("data", nlohmann::json::object());
    cfg.data_manifest = resolve(data, "manifest", base_dir);
    cfg.synthetic_manifest = resolve(data, "synthetic", base_dir);
    cfg.benchmark_train = resolve(data, "benchmark_train", base_dir);
    cfg.benchmark_test = resolve(data, "benchmark_test", base_dir);
    cfg.events = section<eventsim::EventConfig>(doc, "events", cfg.class_count, has_classes);
    cfg.generator = section<gen::GeneratorConfig>(doc, "generator", cfg.class_count, has_classes);
    cfg.discriminator = section<adv::DiscriminatorConfig>(doc, "discriminator", cfg.class_count, has_classes);
    cfg.train = section<adv::GanTrainConfig>(doc, "train", cfg.class_count, has_classes);
    cfg.generate = section<datagen::GenerateConfig>(doc, "generate", cfg.class_count, has_classes);
    cfg.detector = section<det::DetectorConfig>(doc, "detector", cfg.class_count, has_classes);
    cfg.pretrain = section<det::PretrainConfig>(doc, "pretrain", cfg.class_count, has_classes);
    cfg.finetune = section<det::PretrainConfig>(doc, "finetune", cfg.class_count, has_classes);
    cfg.extractor = doc.value("eval", nlohmann::json::object()).value("extractor", std::string("color"));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  cfg.events.validate();
  cfg.generator.validate();
  cfg.discriminator.validate();
  cfg.train.validate();
  cfg.generate.validate();
  cfg.detector.validate();
  cfg.pretrain.validate();
  cfg.finetune.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

nlohmann::json to_json(const RunConfig& cfg) {
  return nlohmann::json{{"seed", cfg.seed},
                        {"class_count", cfg.class_count},
                        {"data",
                         {{"manifest", cfg.data_manifest.string()},
                          {"synthetic", cfg.synthetic_manifest.string()},
                          {"benchmark_train", cfg.benchmark_train.string()},
                          {"benchmark_test", cfg.benchmark_test.string()}}},
                        {"events", cfg.events},
                        {"generator", cfg.generator},
                        {"discriminator", cfg.discriminator},
                        {"train", cfg.train},
                        {"generate", cfg.generate},
                        {"detector", cfg.detector},
                        {"pretrain", cfg.pretrain},
                        {"finetune", cfg.finetune},
                        {"eval", {{"extractor", cfg.extractor}}}};
}

}  // namespace changen::app
