#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesiontl/dataset.hpp"
#include "lesiontl/evaluation.hpp"
#include "lesiontl/model.hpp"
#include "lesiontl/training.hpp"

namespace lesiontl::experiment {

enum class Suite { single, compare_architectures, compare_optimizers, ablation };

std::string_view to_string(Suite suite);
std::optional<Suite> parse_suite(std::string_view text);

struct SplitConfig {
  double test_fraction = 0.3;
  bool stratified = true;
};

struct KFoldConfig {
  bool enabled = true;
  int k = 10;
  bool training_only = true;  // folds over the training split rather than the whole manifest
};

struct ExperimentConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  Suite suite = Suite::single;
  double balancing_ratio = dataset::kDefaultBalancingRatio;
  SplitConfig split;
  double validation_fraction = 0.15;  // carved from the training split
  KFoldConfig kfold;
  model::ModelSpec model;
  training::TrainingConfig training;
  std::vector<BackboneId> architectures{BackboneId::alexnet_modified, BackboneId::vgg16, BackboneId::vgg19};
  std::map<training::OptimizerKind, double> optimizer_learning_rates;  // compare_optimizers only
  std::optional<std::filesystem::path> weights_dir;                    // else $LESIONTL_CACHE
  bool save_every_epoch = false;

  /// Every violated field; empty when valid.
  std::vector<std::string> violations() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);

/// Parses a JSON config. Unknown or malformed fields are collected and raised
/// together as a ValidationError.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Throws ValidationError listing every violation.
void validate(const ExperimentConfig& config);

/// SHA-256 of the canonical (sorted-key, compact) JSON rendering.
std::string config_digest(const ExperimentConfig& config);

/// `<suite>-<seed>-<first 8 hex of the digest>`.
std::string run_id(const ExperimentConfig& config);

// -------------------------------------------------------------------- plots

struct LabeledHistory {
  std::string label;
  std::vector<training::EpochRecord> history;
};

struct PlotArtifacts {
  std::filesystem::path image;    // PNG
  std::filesystem::path sidecar;  // CSV of the plotted points
};

/// Draws validation accuracy (upper panel) and validation loss (lower panel)
/// against epoch, one coloured series per label. The sidecar CSV
/// `series,epoch,val_accuracy,val_loss` holds the exact plotted values.
/// Throws Error(ErrorCode::plot) when there is nothing to draw.
PlotArtifacts plot_learning_curves(std::span<const LabeledHistory> histories, const std::filesystem::path& image);

// ------------------------------------------------------------------- runner

struct RunArtifacts {
  std::filesystem::path run_dir;
  std::filesystem::path config_snapshot_path;
  std::vector<std::filesystem::path> report_paths;
  std::vector<std::filesystem::path> history_paths;
  std::vector<std::filesystem::path> plot_paths;
  std::vector<std::filesystem::path> model_export_paths;
  std::vector<std::filesystem::path> table_paths;  // comparison and delta tables

  std::vector<std::filesystem::path> all() const;
};

struct RunOptions {
  int jobs = 1;                 // suite members trained concurrently
  std::ostream* log = nullptr;  // progress lines
};

/// Validates, writes the config snapshot, then executes the configured suite.
RunArtifacts run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

RunArtifacts run_architecture_comparison(const ExperimentConfig& config, const RunOptions& options = {});
RunArtifacts run_optimizer_comparison(const ExperimentConfig& config, const RunOptions& options = {});
RunArtifacts run_ablation(const ExperimentConfig& config, const RunOptions& options = {});

/// Human-readable plan for --dry-run.
std::string describe_plan(const ExperimentConfig& config);

struct AblationDelta {
  std::string layer_name;
  double val_accuracy = 0.0;
  double delta_val_accuracy = 0.0;  // ablated minus baseline
};

std::vector<AblationDelta> ablation_deltas(const evaluation::EvaluationReport& baseline,
                                           std::span<const std::pair<std::string, evaluation::EvaluationReport>> runs);
void write_ablation_table(const std::filesystem::path& path, std::span<const AblationDelta> deltas);

}  // namespace lesiontl::experiment
