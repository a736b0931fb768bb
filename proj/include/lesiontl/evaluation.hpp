#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesiontl/dataset.hpp"
#include "lesiontl/model.hpp"
#include "lesiontl/training.hpp"

namespace lesiontl::evaluation {

using dataset::Label;

/// Melanoma is the positive class.
struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct MetricSet {
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  friend bool operator==(const MetricSet&, const MetricSet&) = default;
};

inline constexpr const char* kMetricDefinitions =
    "positive=melanoma; accuracy=(tp+tn)/(tp+fp+tn+fn); sensitivity=tp/(tp+fn); specificity=tn/(tn+fp)";

/// Throws Error(ErrorCode::shape) on a length mismatch or empty input.
ConfusionMatrix confusion_from_predictions(std::span<const Label> labels, std::span<const Label> predicted);
ConfusionMatrix confusion_from_indices(std::span<const int> labels, std::span<const int> predicted);

/// Throws UndefinedMetricError("sensitivity") when no melanoma sample was
/// evaluated and UndefinedMetricError("specificity") when no benign one was.
MetricSet metrics_from_confusion(const ConfusionMatrix& cm);

// ------------------------------------------------------------------- k-fold

struct FoldResult {
  int fold_index = 0;
  bool failed = false;
  std::string error;  // set when failed
  MetricSet metrics;
  ConfusionMatrix confusion;
  std::string history_ref;
};

struct KFoldSummary {
  int k = 0;
  std::vector<FoldResult> per_fold;
  MetricSet mean_metrics;
  MetricSet std_metrics;  // population standard deviation over completed folds
  int failed_folds = 0;
};

struct FoldTask {
  int fold_index = 0;
  std::vector<std::string> train_ids;  // every id outside the fold
  std::vector<std::string> eval_ids;   // the fold itself
  std::uint64_t seed = 0;              // base_seed + fold_index
};

struct FoldOutcome {
  std::vector<Label> labels;       // per eval id
  std::vector<Label> predictions;  // per eval id
  std::string history_ref;
};

using FoldRunner = std::function<FoldOutcome(const FoldTask&)>;

/// Runs every fold (up to `jobs` concurrently), asserts train/eval isolation,
/// and aggregates. A fold whose runner throws DivergenceError is marked failed
/// and excluded from the mean and standard deviation.
KFoldSummary kfold_cross_validate(const dataset::FoldPlan& plan, std::uint64_t base_seed, const FoldRunner& runner,
                                  int jobs = 1);

/// Population mean and standard deviation of the completed folds.
void aggregate_folds(KFoldSummary& summary);

struct KFoldTrainingOptions {
  double validation_fraction = 0.15;
  dataset::PreprocessSpec preprocess;
  std::optional<std::filesystem::path> weights_dir;
  std::optional<std::filesystem::path> output_dir;  // fold_<f>/history.csv
  int jobs = 1;
};

/// Trains a fresh model per fold on the ids outside it (with a stratified
/// validation carve-out) and evaluates on the fold.
KFoldSummary kfold_cross_validate(const dataset::DatasetManifest& manifest, const dataset::FoldPlan& plan,
                                  const model::ModelSpec& spec, const training::TrainingConfig& config,
                                  const KFoldTrainingOptions& options);

// ------------------------------------------------------------------- report

inline constexpr int kReportSchemaVersion = 1;

struct EvaluationReport {
  int schema_version = kReportSchemaVersion;
  std::string architecture;
  std::string config_digest;
  std::string metric_definitions = kMetricDefinitions;
  std::optional<double> train_accuracy;
  std::optional<double> val_accuracy;
  std::optional<MetricSet> test_metrics;
  std::optional<ConfusionMatrix> test_confusion;
  std::optional<KFoldSummary> kfold;
  nlohmann::json provenance = nlohmann::json::object();
};

void to_json(nlohmann::json& j, const ConfusionMatrix& cm);
void from_json(const nlohmann::json& j, ConfusionMatrix& cm);
void to_json(nlohmann::json& j, const MetricSet& m);
void from_json(const nlohmann::json& j, MetricSet& m);
void to_json(nlohmann::json& j, const FoldResult& f);
void from_json(const nlohmann::json& j, FoldResult& f);
void to_json(nlohmann::json& j, const KFoldSummary& s);
void from_json(const nlohmann::json& j, KFoldSummary& s);
void to_json(nlohmann::json& j, const EvaluationReport& r);
void from_json(const nlohmann::json& j, EvaluationReport& r);

void write_report(const std::filesystem::path& path, const EvaluationReport& report);
EvaluationReport read_report(const std::filesystem::path& path);

struct ComparisonTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

/// One row per report: architecture, then train / validation / test / k-fold
/// accuracy and test sensitivity / specificity as percentages with two
/// decimals ("-" when a value is absent). Throws Error(ErrorCode::schema) for
/// an empty list or reports with differing schema or metric definitions.
ComparisonTable aggregate_reports(std::span<const EvaluationReport> reports);

std::string format_percent(double fraction);
std::string render_csv(const ComparisonTable& table);
std::string render_text(const ComparisonTable& table);

}  // namespace lesiontl::evaluation
