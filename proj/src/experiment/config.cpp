#include <cmath>
#include <fstream>
#include <set>

#include "lesiontl/errors.hpp"
#include "lesiontl/experiment.hpp"
#include "lesiontl/hash.hpp"

namespace lesiontl::experiment {
namespace {

const std::set<std::string> kTopLevel = {
    "dataset_root", "output_dir", "seed",         "suite",        "balancing_ratio",
    "split",        "validation_fraction", "kfold", "model",        "training",
    "architectures", "optimizer_learning_rates", "weights_dir", "save_every_epoch"};
const std::set<std::string> kSplit = {"test_fraction", "stratified"};
const std::set<std::string> kKFold = {"enabled", "k", "training_only"};
const std::set<std::string> kModel = {"backbone",   "pretrained", "num_classes", "dropout_rate",
                                      "head_widths", "freeze",     "input_size"};
const std::set<std::string> kFreeze = {"freeze_first_n", "freeze_backbone_rest"};
const std::set<std::string> kTraining = {"optimizer", "learning_rate", "momentum", "max_epochs",
                                         "batch_size", "early_stopping", "seed"};
const std::set<std::string> kEarlyStop = {"enabled", "monitor", "patience", "min_delta", "restore_best"};

void unknown_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& prefix,
                  std::vector<std::string>& out) {
  if (!j.is_object()) {
    out.push_back(prefix + " must be an object");
    return;
  }
  for (const auto& [key, value] : j.items()) {
    if (allowed.count(key) == 0) out.push_back("unknown field " + prefix + key);
  }
}

// Runs `fn`, converting a parse failure into a violation message.
template <typename Fn>
void field(const std::string& name, std::vector<std::string>& out, Fn&& fn) {
  try {
    fn();
  } catch (const nlohmann::json::exception& e) {
    out.push_back(name + ": " + e.what());
  } catch (const Error& e) {
    out.push_back(name + ": " + e.what());
  }
}

}  // namespace

std::string_view to_string(Suite suite) {
  switch (suite) {
    case Suite::single: return "single";
    case Suite::compare_architectures: return "compare_architectures";
    case Suite::compare_optimizers: return "compare_optimizers";
    case Suite::ablation: return "ablation";
  }
  return "single";
}

std::optional<Suite> parse_suite(std::string_view text) {
  for (auto s : {Suite::single, Suite::compare_architectures, Suite::compare_optimizers, Suite::ablation}) {
    if (text == to_string(s)) return s;
  }
  return std::nullopt;
}

std::vector<std::string> ExperimentConfig::violations() const {
  std::vector<std::string> out;
  if (dataset_root.empty()) {
    out.push_back("dataset_root is required");
  } else if (!std::filesystem::is_directory(dataset_root)) {
    out.push_back("dataset_root " + dataset_root.string() + " is not a directory");
  }
  if (output_dir.empty()) out.push_back("output_dir is required");
  if (!(balancing_ratio >= 1.0 && std::isfinite(balancing_ratio))) out.push_back("balancing_ratio must be >= 1");
  if (!(split.test_fraction > 0.0 && split.test_fraction < 1.0)) out.push_back("split.test_fraction must lie in (0, 1)");
  if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
    out.push_back("validation_fraction must lie in (0, 1)");
  }
  if (kfold.enabled && kfold.k < 2) out.push_back("kfold.k must be at least 2");
  try {
    model.validate();
  } catch (const Error& e) {
    out.push_back(std::string("model: ") + e.what());
  }
  if (model.input_size != 224) out.push_back("model.input_size must be 224 to match image preprocessing");
  for (const auto& v : training.violations()) out.push_back(v);
  if (suite == Suite::compare_architectures) {
    if (architectures.empty()) out.push_back("architectures must list at least one backbone");
    for (auto a : architectures) {
      if (model.freeze.freeze_first_n > model::backbone_weight_layers(a)) {
        out.push_back("model.freeze.freeze_first_n exceeds the weight-bearing layers of " + std::string(to_string(a)));
      }
    }
  }
  for (const auto& [kind, rate] : optimizer_learning_rates) {
    if (!(rate > 0.0 && std::isfinite(rate))) {
      out.push_back("optimizer_learning_rates." + std::string(training::to_string(kind)) + " must be positive");
    }
  }
  return out;
}

void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  std::vector<std::string> archs;
  for (auto a : c.architectures) archs.emplace_back(to_string(a));
  nlohmann::json rates = nlohmann::json::object();
  for (const auto& [kind, rate] : c.optimizer_learning_rates) rates[std::string(training::to_string(kind))] = rate;
  j = {{"dataset_root", c.dataset_root.string()},
       {"output_dir", c.output_dir.string()},
       {"seed", c.seed},
       {"suite", std::string(to_string(c.suite))},
       {"balancing_ratio", c.balancing_ratio},
       {"split", {{"test_fraction", c.split.test_fraction}, {"stratified", c.split.stratified}}},
       {"validation_fraction", c.validation_fraction},
       {"kfold", {{"enabled", c.kfold.enabled}, {"k", c.kfold.k}, {"training_only", c.kfold.training_only}}},
       {"model", c.model},
       {"training", c.training},
       {"architectures", archs},
       {"optimizer_learning_rates", rates},
       {"weights_dir", c.weights_dir ? nlohmann::json(c.weights_dir->string()) : nlohmann::json()},
       {"save_every_epoch", c.save_every_epoch}};
}

ExperimentConfig parse_config(const nlohmann::json& j) {
  ExperimentConfig c;
  std::vector<std::string> bad;
  unknown_keys(j, kTopLevel, "", bad);
  if (!j.is_object()) throw ValidationError(bad);

  field("dataset_root", bad, [&] { c.dataset_root = j.value("dataset_root", std::string()); });
  field("output_dir", bad, [&] { c.output_dir = j.value("output_dir", std::string()); });
  field("seed", bad, [&] { c.seed = j.value("seed", c.seed); });
  field("suite", bad, [&] {
    if (!j.contains("suite")) return;
    const auto text = j.at("suite").get<std::string>();
    const auto s = parse_suite(text);
    if (!s) throw Error(ErrorCode::validation, "unknown suite '" + text + "'");
    c.suite = *s;
  });
  field("balancing_ratio", bad, [&] { c.balancing_ratio = j.value("balancing_ratio", c.balancing_ratio); });
  field("split", bad, [&] {
    if (!j.contains("split")) return;
    const auto& s = j.at("split");
    unknown_keys(s, kSplit, "split.", bad);
    c.split.test_fraction = s.value("test_fraction", c.split.test_fraction);
    c.split.stratified = s.value("stratified", c.split.stratified);
  });
  field("validation_fraction", bad,
        [&] { c.validation_fraction = j.value("validation_fraction", c.validation_fraction); });
  field("kfold", bad, [&] {
    if (!j.contains("kfold")) return;
    const auto& k = j.at("kfold");
    unknown_keys(k, kKFold, "kfold.", bad);
    c.kfold.enabled = k.value("enabled", c.kfold.enabled);
    c.kfold.k = k.value("k", c.kfold.k);
    c.kfold.training_only = k.value("training_only", c.kfold.training_only);
  });
  field("model", bad, [&] {
    if (!j.contains("model")) return;
    const auto& m = j.at("model");
    unknown_keys(m, kModel, "model.", bad);
    if (m.contains("freeze")) unknown_keys(m.at("freeze"), kFreeze, "model.freeze.", bad);
    c.model = m.get<model::ModelSpec>();
  });
  field("training", bad, [&] {
    if (!j.contains("training")) return;
    const auto& t = j.at("training");
    unknown_keys(t, kTraining, "training.", bad);
    if (t.contains("early_stopping")) unknown_keys(t.at("early_stopping"), kEarlyStop, "training.early_stopping.", bad);
    c.training = t.get<training::TrainingConfig>();
  });
  field("architectures", bad, [&] {
    if (!j.contains("architectures")) return;
    c.architectures.clear();
    for (const auto& name : j.at("architectures").get<std::vector<std::string>>()) {
      const auto id = parse_backbone(name);
      if (!id) throw Error(ErrorCode::validation, "unknown backbone '" + name + "'");
      c.architectures.push_back(*id);
    }
  });
  field("optimizer_learning_rates", bad, [&] {
    if (!j.contains("optimizer_learning_rates")) return;
    for (const auto& [key, value] : j.at("optimizer_learning_rates").items()) {
      const auto kind = training::parse_optimizer(key);
      if (!kind) throw Error(ErrorCode::validation, "unknown optimizer '" + key + "'");
      c.optimizer_learning_rates[*kind] = value.get<double>();
    }
  });
  field("weights_dir", bad, [&] {
    if (j.contains("weights_dir") && !j.at("weights_dir").is_null()) {
      c.weights_dir = std::filesystem::path(j.at("weights_dir").get<std::string>());
    }
  });
  field("save_every_epoch", bad, [&] { c.save_every_epoch = j.value("save_every_epoch", c.save_every_epoch); });

  if (!bad.empty()) throw ValidationError(bad);
  // The experiment seed drives every random stream.
  c.training.seed = c.seed;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError({"cannot read config file " + path.string()});
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError({path.string() + ": " + e.what()});
  }
  return parse_config(j);
}

void validate(const ExperimentConfig& config) {
  const auto v = config.violations();
  if (!v.empty()) throw ValidationError(v);
}

std::string config_digest(const ExperimentConfig& config) {
  // Where the artifacts land does not change what is computed, and the
  // experiment seed always overrides the training seed.
  auto normalized = config;
  normalized.training.seed = config.seed;
  auto j = nlohmann::json(normalized);
  j.erase("output_dir");
  return sha256_hex(j.dump());
}

std::string run_id(const ExperimentConfig& config) {
  return std::string(to_string(config.suite)) + "-" + std::to_string(config.seed) + "-" +
         config_digest(config).substr(0, 8);
}

}  // namespace lesiontl::experiment
