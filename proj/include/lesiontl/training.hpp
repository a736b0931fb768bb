#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesiontl/dataset.hpp"
#include "lesiontl/model.hpp"

namespace lesiontl::training {

enum class OptimizerKind { adam, sgd };
enum class Monitor { val_loss, val_accuracy };

std::string_view to_string(OptimizerKind kind);
std::string_view to_string(Monitor monitor);
std::optional<OptimizerKind> parse_optimizer(std::string_view text);
std::optional<Monitor> parse_monitor(std::string_view text);

// Decay coefficients used for every Adam optimizer.
inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-7;

inline constexpr double kDefaultAdamRate = 1e-4;
inline constexpr double kDefaultSgdRate = 1e-2;
inline constexpr double kDefaultMomentum = 0.9;

struct EarlyStopSpec {
  bool enabled = true;
  Monitor monitor = Monitor::val_loss;
  int patience = 10;
  double min_delta = 0.0;
  bool restore_best = true;
};

struct TrainingConfig {
  OptimizerKind optimizer_kind = OptimizerKind::adam;
  std::optional<double> learning_rate;  // unset: per-optimizer default
  double momentum = kDefaultMomentum;   // sgd only
  int max_epochs = 100;
  int batch_size = 32;
  EarlyStopSpec early_stopping;
  std::uint64_t seed = 0;

  double effective_learning_rate() const;
  /// Every violated field, empty when valid.
  std::vector<std::string> violations() const;
  /// Throws Error(ErrorCode::config) naming the first violation.
  void validate() const;
};

void to_json(nlohmann::json& j, const EarlyStopSpec& s);
void from_json(const nlohmann::json& j, EarlyStopSpec& s);
void to_json(nlohmann::json& j, const TrainingConfig& c);
void from_json(const nlohmann::json& j, TrainingConfig& c);

// ---------------------------------------------------------------- optimizers

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual OptimizerKind kind() const = 0;
  /// Applies one update from the accumulated gradients.
  virtual void step(std::span<nn::Parameter<float>* const> params) = 0;
  /// Hyper-parameters as recorded in reports.
  virtual nlohmann::json describe() const = 0;
};

/// Throws Error(ErrorCode::config) for a non-positive learning rate or a
/// momentum outside [0, 1).
std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double learning_rate, double momentum = 0.0);

// ----------------------------------------------------------- early stopping

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct StopDecision {
  bool stop = false;
  int best_epoch = 0;  // 1-based
};

/// An epoch improves when it beats the best earlier value by more than
/// min_delta (the first epoch always does). Training stops once
/// max(patience, 1) epochs have passed since the last improvement.
/// best_epoch is the earliest epoch holding the best value.
StopDecision early_stop_check(std::span<const double> monitored, bool higher_is_better, int patience,
                              double min_delta);
StopDecision early_stop_check(std::span<const EpochRecord> history, const EarlyStopSpec& spec);

double monitored_value(const EpochRecord& record, Monitor monitor);

// ------------------------------------------------------------------ history

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);
std::vector<EpochRecord> read_history_csv(const std::filesystem::path& path);

// ------------------------------------------------------------------ samples

/// Indexed, labelled, preprocessed inputs.
class SampleSource {
 public:
  virtual ~SampleSource() = default;
  virtual std::size_t size() const = 0;
  virtual const std::string& id(std::size_t i) const = 0;
  virtual int label(std::size_t i) const = 0;  // class index
  virtual nn::FeatureShape shape() const = 0;
  virtual void load(std::size_t i, float* dst) const = 0;
};

class InMemorySource final : public SampleSource {
 public:
  explicit InMemorySource(nn::FeatureShape shape) : shape_(shape) {}

  void add(std::string id, int label, std::vector<float> values);

  std::size_t size() const override { return ids_.size(); }
  const std::string& id(std::size_t i) const override { return ids_[i]; }
  int label(std::size_t i) const override { return labels_[i]; }
  nn::FeatureShape shape() const override { return shape_; }
  void load(std::size_t i, float* dst) const override;

 private:
  nn::FeatureShape shape_;
  std::vector<std::string> ids_;
  std::vector<int> labels_;
  std::vector<float> data_;
};

/// Manifest entries decoded and preprocessed on first use. Preprocessed
/// tensors can be cached in memory.
class ManifestSource final : public SampleSource {
 public:
  ManifestSource(const dataset::DatasetManifest& manifest, std::span<const std::string> ids,
                 dataset::PreprocessSpec spec, bool cache = true);

  std::size_t size() const override { return samples_.size(); }
  const std::string& id(std::size_t i) const override { return samples_[i].id; }
  int label(std::size_t i) const override { return dataset::class_index(samples_[i].label); }
  nn::FeatureShape shape() const override;
  void load(std::size_t i, float* dst) const override;

 private:
  std::vector<dataset::LesionSample> samples_;
  dataset::PreprocessSpec spec_;
  bool cache_;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, std::vector<float>> cached_;
};

// ------------------------------------------------------------------ trainer

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_dir;  // checkpoints/epoch_<E>/ and best/
  const model::ModelSpec* spec = nullptr;               // required for checkpoints
  bool save_every_epoch = false;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainedModel {
  model::Model* model = nullptr;
  std::vector<EpochRecord> history;
  bool stopped_early = false;
  int best_epoch = 0;
  bool restored_best = false;
  TrainingConfig config;
  nlohmann::json optimizer;  // describe() of the optimizer used
};

/// Runs at most max_epochs epochs with dropout active in training passes and
/// disabled in validation passes. Throws Error(ErrorCode::data) for empty or
/// overlapping sets and DivergenceError on a non-finite loss.
TrainedModel train(model::Model& model, const SampleSource& train_set, const SampleSource& val_set,
                   const TrainingConfig& config, const TrainOptions& options = {});

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;  // argmax class index per sample
};

/// Inference pass (dropout off) over every sample of `source`.
Evaluation evaluate(model::Model& model, const SampleSource& source, int batch_size);

/// Fills `batch` with samples `indices` of `source`; returns their labels.
std::vector<int> load_batch(const SampleSource& source, std::span<const std::size_t> indices,
                            nn::Tensor<float>& batch);

}  // namespace lesiontl::training
