#include <algorithm>
#include <atomic>
#include <chrono>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "lesiontl/csv.hpp"
#include "lesiontl/errors.hpp"
#include "lesiontl/experiment.hpp"
#include "lesiontl/hash.hpp"
#include "lesiontl/rng.hpp"

namespace lesiontl::experiment {
namespace fs = std::filesystem;
namespace {

constexpr std::uint64_t kValidationStream = 0x7a1;
constexpr const char* kToolVersion = "lesiontl 1.0.0";

class Logger {
 public:
  explicit Logger(std::ostream* out) : out_(out) {}
  void line(const std::string& text) {
    if (out_ == nullptr) return;
    std::lock_guard lock(mutex_);
    *out_ << text << std::endl;
  }

 private:
  std::ostream* out_;
  std::mutex mutex_;
};

struct PreparedData {
  dataset::DatasetManifest manifest;
  dataset::SplitPlan split;       // train / test
  dataset::SplitPlan carve;       // fit / validation, inside the training split
  std::string manifest_sha256;
  std::size_t rejected = 0;
};

struct Member {
  std::string name;   // subdirectory; empty for a single run
  std::string label;  // row label in tables and plots
  model::ModelSpec model;
  training::TrainingConfig training;
};

struct MemberResult {
  evaluation::EvaluationReport report;
  std::vector<training::EpochRecord> history;
  RunArtifacts artifacts;
  double seconds = 0.0;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << text;
}

void append(RunArtifacts& into, const RunArtifacts& from) {
  const auto add = [](auto& a, const auto& b) { a.insert(a.end(), b.begin(), b.end()); };
  add(into.report_paths, from.report_paths);
  add(into.history_paths, from.history_paths);
  add(into.plot_paths, from.plot_paths);
  add(into.model_export_paths, from.model_export_paths);
  add(into.table_paths, from.table_paths);
}

PreparedData prepare_data(const ExperimentConfig& c, const fs::path& run_dir, Logger& log) {
  PreparedData d;
  auto build = dataset::build_manifest(c.dataset_root, c.seed, c.balancing_ratio);
  d.manifest = std::move(build.manifest);
  d.rejected = build.rejects.size();
  dataset::write_manifest(run_dir / "manifest.csv", d.manifest);
  dataset::write_rejects(run_dir / "rejects.csv", build.rejects);
  d.manifest_sha256 = sha256_hex(dataset::manifest_csv(d.manifest));
  d.split = dataset::split_train_test(d.manifest, c.split.test_fraction, c.split.stratified, c.seed);
  const auto train_side = dataset::subset(d.manifest, d.split.train_ids);
  d.carve = dataset::split_train_test(train_side, c.validation_fraction, true, derive_seed(c.seed, kValidationStream));
  log.line("dataset: " + std::to_string(d.manifest.size()) + " images (" +
           std::to_string(d.manifest.count(dataset::Label::melanoma)) + " melanoma, " +
           std::to_string(d.manifest.count(dataset::Label::benign)) + " benign), " + std::to_string(d.rejected) +
           " rejected; fit/validation/test = " + std::to_string(d.carve.train_ids.size()) + "/" +
           std::to_string(d.carve.test_ids.size()) + "/" + std::to_string(d.split.test_ids.size()));
  return d;
}

nlohmann::json preprocess_json(const dataset::PreprocessSpec& p) {
  return {{"target_height", p.target_height},
          {"target_width", p.target_width},
          {"channel_means", p.channel_means},
          {"channel_stds", p.channel_stds},
          {"resize", "bilinear"}};
}

MemberResult run_member(const ExperimentConfig& c, const std::string& digest, const PreparedData& data,
                        const Member& m, const fs::path& dir, Logger& log) {
  const auto started = std::chrono::steady_clock::now();
  fs::create_directories(dir);
  const std::string tag = m.label.empty() ? "run" : m.label;
  const auto pre = dataset::PreprocessSpec::for_backbone(m.model.backbone_id);

  training::ManifestSource fit_set(data.manifest, data.carve.train_ids, pre);
  training::ManifestSource val_set(data.manifest, data.carve.test_ids, pre);
  training::ManifestSource test_set(data.manifest, data.split.test_ids, pre, /*cache=*/false);

  auto built = model::build_model(m.model, c.seed, c.weights_dir);
  model::write_summary_csv(dir / "model_summary.csv", built.summary);

  training::TrainOptions topts;
  topts.checkpoint_dir = dir / "checkpoints";
  topts.spec = &m.model;
  topts.save_every_epoch = c.save_every_epoch;
  topts.on_epoch = [&](const training::EpochRecord& r) {
    log.line(tag + " epoch " + std::to_string(r.epoch) + ": loss " + csv::format_real(r.train_loss) + " acc " +
             csv::format_real(r.train_accuracy) + " val_loss " + csv::format_real(r.val_loss) + " val_acc " +
             csv::format_real(r.val_accuracy));
  };
  const auto trained = training::train(*built.model, fit_set, val_set, m.training, topts);

  MemberResult res;
  res.history = trained.history;
  auto& art = res.artifacts;
  art.history_paths.push_back(dir / "history.csv");
  training::write_history_csv(art.history_paths.back(), trained.history);

  const auto fit_eval = training::evaluate(*built.model, fit_set, m.training.batch_size);
  const auto val_eval = training::evaluate(*built.model, val_set, m.training.batch_size);
  const auto test_eval = training::evaluate(*built.model, test_set, m.training.batch_size);

  auto& report = res.report;
  report.architecture = m.label.empty() ? std::string(to_string(m.model.backbone_id)) : m.label;
  report.config_digest = digest;
  report.train_accuracy = fit_eval.accuracy;
  report.val_accuracy = val_eval.accuracy;
  std::vector<int> test_labels;
  for (std::size_t i = 0; i < test_set.size(); ++i) test_labels.push_back(test_set.label(i));
  report.test_confusion = evaluation::confusion_from_indices(test_labels, test_eval.predictions);
  nlohmann::json warnings = nlohmann::json::array();
  try {
    report.test_metrics = evaluation::metrics_from_confusion(*report.test_confusion);
  } catch (const UndefinedMetricError& e) {
    warnings.push_back(e.what());
  }

  if (c.kfold.enabled) {
    const auto ids = c.kfold.training_only ? data.split.train_ids : [&] {
      std::vector<std::string> all;
      for (const auto& s : data.manifest.samples) all.push_back(s.id);
      return all;
    }();
    const auto labeled = dataset::labeled_ids(data.manifest, ids);
    const auto plan = dataset::make_folds(labeled, c.kfold.k, c.split.stratified, c.seed);
    evaluation::KFoldTrainingOptions kopts;
    kopts.validation_fraction = c.validation_fraction;
    kopts.preprocess = pre;
    kopts.weights_dir = c.weights_dir;
    kopts.output_dir = dir / "kfold";
    log.line(tag + ": " + std::to_string(c.kfold.k) + "-fold cross-validation");
    report.kfold = evaluation::kfold_cross_validate(data.manifest, plan, m.model, m.training, kopts);
    for (const auto& f : report.kfold->per_fold) {
      if (!f.history_ref.empty()) art.history_paths.push_back(dir / "kfold" / f.history_ref);
    }
    if (report.kfold->failed_folds > 0) {
      warnings.push_back(std::to_string(report.kfold->failed_folds) + " fold(s) diverged and were excluded");
    }
  }

  report.provenance = {
      {"tool", kToolVersion},
      {"config_digest", digest},
      {"seed", c.seed},
      {"model", m.model},
      {"training", m.training},
      {"optimizer", trained.optimizer},
      {"pretrained_weights_sha256", built.weights_sha256},
      {"kernel_isa", std::string(simd::isa_name(simd::active().isa))},
      {"preprocess", preprocess_json(pre)},
      {"dataset",
       {{"manifest_sha256", data.manifest_sha256},
        {"samples", data.manifest.size()},
        {"melanoma", data.manifest.count(dataset::Label::melanoma)},
        {"benign", data.manifest.count(dataset::Label::benign)},
        {"rejected", data.rejected},
        {"balancing_ratio", c.balancing_ratio}}},
      {"split",
       {{"test_fraction", c.split.test_fraction},
        {"stratified", c.split.stratified},
        {"validation_fraction", c.validation_fraction},
        {"fit", data.carve.train_ids.size()},
        {"validation", data.carve.test_ids.size()},
        {"test", data.split.test_ids.size()}}},
      {"run",
       {{"epochs_run", trained.history.size()},
        {"stopped_early", trained.stopped_early},
        {"best_epoch", trained.best_epoch},
        {"restored_best", trained.restored_best},
        {"history_ref", "history.csv"}}},
      {"parameters", {{"total", built.summary.total_params}, {"trainable", built.summary.trainable_params}}},
      {"warnings", warnings}};

  art.model_export_paths.push_back(dir / "model");
  model::export_model(art.model_export_paths.back(), *built.model, m.model);

  const std::vector<LabeledHistory> curves = {{report.architecture, trained.history}};
  const auto plot = plot_learning_curves(curves, dir / "learning_curves.png");
  art.plot_paths.push_back(plot.image);
  art.plot_paths.push_back(plot.sidecar);

  art.report_paths.push_back(dir / "report.json");
  evaluation::write_report(art.report_paths.back(), report);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  log.line(tag + ": done, val_accuracy " + csv::format_real(val_eval.accuracy) + ", test_accuracy " +
           csv::format_real(report.test_metrics ? report.test_metrics->accuracy : 0.0));
  return res;
}

struct SuiteOutcome {
  std::vector<std::optional<MemberResult>> results;
  std::vector<std::exception_ptr> errors;
  std::size_t failures = 0;
};

SuiteOutcome run_members(const ExperimentConfig& c, const std::string& digest, const PreparedData& data,
                         const std::vector<Member>& members, const fs::path& run_dir, int jobs, Logger& log) {
  SuiteOutcome out;
  out.results.resize(members.size());
  out.errors.resize(members.size());
  const auto work = [&](std::size_t i) {
    try {
      const auto dir = members[i].name.empty() ? run_dir : run_dir / members[i].name;
      out.results[i] = run_member(c, digest, data, members[i], dir, log);
    } catch (const std::exception& e) {
      log.line((members[i].label.empty() ? std::string("run") : members[i].label) + " failed: " + e.what());
      out.errors[i] = std::current_exception();
    }
  };
  const auto workers = static_cast<std::size_t>(std::clamp<int>(jobs, 1, static_cast<int>(members.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < members.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < members.size();) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : out.errors) {
    if (e) ++out.failures;
  }
  if (out.failures == members.size()) {
    for (const auto& e : out.errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  return out;
}

void write_timing(const fs::path& run_dir, const std::string& id, const std::string& digest,
                  const std::vector<Member>& members, const SuiteOutcome& outcome, double total) {
  nlohmann::json members_json = nlohmann::json::object();
  for (std::size_t i = 0; i < members.size(); ++i) {
    const auto key = members[i].name.empty() ? std::string("run") : members[i].name;
    members_json[key] = outcome.results[i] ? nlohmann::json(outcome.results[i]->seconds) : nlohmann::json();
  }
  const nlohmann::json j = {
      {"run_id", id}, {"config_digest", digest}, {"wall_clock_seconds", total}, {"members", members_json}};
  write_text(run_dir / "timing.json", j.dump(2) + "\n");
}

void write_comparison(const std::vector<evaluation::EvaluationReport>& reports, const fs::path& run_dir,
                      const std::string& stem, RunArtifacts& art) {
  const auto table = evaluation::aggregate_reports(reports);
  art.table_paths.push_back(run_dir / (stem + ".csv"));
  write_text(art.table_paths.back(), evaluation::render_csv(table));
  art.table_paths.push_back(run_dir / (stem + ".txt"));
  write_text(art.table_paths.back(), evaluation::render_text(table));
}

std::vector<Member> plan_members(const ExperimentConfig& c) {
  std::vector<Member> members;
  const std::string arch(to_string(c.model.backbone_id));
  switch (c.suite) {
    case Suite::single:
      members.push_back({"", arch, c.model, c.training});
      break;
    case Suite::compare_architectures:
      for (auto a : c.architectures) {
        Member m{std::string(to_string(a)), std::string(to_string(a)), c.model, c.training};
        m.model.backbone_id = a;
        members.push_back(m);
      }
      break;
    case Suite::compare_optimizers:
      for (auto kind : {training::OptimizerKind::adam, training::OptimizerKind::sgd}) {
        const std::string name(training::to_string(kind));
        Member m{name, arch + "/" + name, c.model, c.training};
        m.training.optimizer_kind = kind;
        const auto it = c.optimizer_learning_rates.find(kind);
        m.training.learning_rate =
            it != c.optimizer_learning_rates.end() ? std::optional<double>(it->second) : std::nullopt;
        members.push_back(m);
      }
      break;
    case Suite::ablation: {
      const auto removable = model::list_removable_head_layers(c.model);
      // The head must keep at least one hidden layer after a removal.
      if (removable.size() < 2) {
        throw Error(ErrorCode::ablation_impossible,
                    "ablation needs at least two hidden head layers; removing the only one leaves no head");
      }
      members.push_back({"baseline", arch + "/baseline", c.model, c.training});
      for (const auto& layer : removable) {
        members.push_back({"without_" + layer, arch + "/without_" + layer, model::without_head_layer(c.model, layer),
                           c.training});
      }
      break;
    }
  }
  return members;
}

ExperimentConfig normalized(ExperimentConfig c) {
  c.training.seed = c.seed;
  return c;
}

}  // namespace

std::vector<fs::path> RunArtifacts::all() const {
  std::vector<fs::path> out{config_snapshot_path};
  for (const auto* list : {&report_paths, &history_paths, &plot_paths, &model_export_paths, &table_paths}) {
    out.insert(out.end(), list->begin(), list->end());
  }
  return out;
}

std::vector<AblationDelta> ablation_deltas(
    const evaluation::EvaluationReport& baseline,
    std::span<const std::pair<std::string, evaluation::EvaluationReport>> runs) {
  if (!baseline.val_accuracy) throw Error(ErrorCode::schema, "baseline report lacks val_accuracy");
  std::vector<AblationDelta> out;
  for (const auto& [layer, report] : runs) {
    if (!report.val_accuracy) throw Error(ErrorCode::schema, "ablation report lacks val_accuracy");
    out.push_back({layer, *report.val_accuracy, *report.val_accuracy - *baseline.val_accuracy});
  }
  return out;
}

void write_ablation_table(const fs::path& path, std::span<const AblationDelta> deltas) {
  std::vector<csv::Row> rows;
  for (const auto& d : deltas) {
    rows.push_back({d.layer_name, csv::format_real(d.val_accuracy), csv::format_real(d.delta_val_accuracy)});
  }
  csv::write(path, {"layer_name", "val_accuracy", "delta_val_accuracy"}, rows);
}

std::string describe_plan(const ExperimentConfig& config) {
  const auto c = normalized(config);
  std::ostringstream out;
  out << "run_id: " << run_id(c) << '\n';
  out << "output: " << (c.output_dir / run_id(c)).string() << '\n';
  out << "dataset_root: " << c.dataset_root.string() << '\n';
  out << "suite: " << to_string(c.suite) << '\n';
  out << "split: test_fraction " << csv::format_real(c.split.test_fraction)
      << (c.split.stratified ? " stratified" : " unstratified") << ", validation_fraction "
      << csv::format_real(c.validation_fraction) << '\n';
  out << "kfold: " << (c.kfold.enabled ? std::to_string(c.kfold.k) + " folds" : std::string("disabled")) << '\n';
  for (const auto& m : plan_members(c)) {
    out << "member " << (m.name.empty() ? std::string("(root)") : m.name) << ": backbone "
        << to_string(m.model.backbone_id) << ", head [";
    for (std::size_t i = 0; i < m.model.head_widths.size(); ++i) out << (i ? "," : "") << m.model.head_widths[i];
    out << "], optimizer " << training::to_string(m.training.optimizer_kind) << " lr "
        << csv::format_real(m.training.effective_learning_rate()) << ", max_epochs " << m.training.max_epochs
        << ", batch " << m.training.batch_size << '\n';
  }
  return out.str();
}

RunArtifacts run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  const auto started = std::chrono::steady_clock::now();
  const auto c = normalized(config);
  validate(c);
  const auto digest = config_digest(c);
  const auto id = run_id(c);
  const auto members = plan_members(c);

  RunArtifacts art;
  art.run_dir = c.output_dir / id;
  fs::create_directories(art.run_dir);
  art.config_snapshot_path = art.run_dir / "config_snapshot.json";
  write_text(art.config_snapshot_path, nlohmann::json(c).dump(2) + "\n");

  Logger log(options.log);
  log.line("run " + id + " -> " + art.run_dir.string());
  const auto data = prepare_data(c, art.run_dir, log);
  const auto outcome = run_members(c, digest, data, members, art.run_dir, options.jobs, log);

  std::vector<evaluation::EvaluationReport> reports;
  std::vector<LabeledHistory> curves;
  for (std::size_t i = 0; i < members.size(); ++i) {
    if (!outcome.results[i]) continue;
    append(art, outcome.results[i]->artifacts);
    reports.push_back(outcome.results[i]->report);
    curves.push_back({outcome.results[i]->report.architecture, outcome.results[i]->history});
  }

  if (c.suite != Suite::single) write_comparison(reports, art.run_dir, "comparison", art);
  if (c.suite != Suite::single && !curves.empty()) {
    const std::string stem = c.suite == Suite::compare_optimizers     ? "optimizer_comparison"
                             : c.suite == Suite::compare_architectures ? "architecture_comparison"
                                                                       : "ablation_curves";
    const auto plot = plot_learning_curves(curves, art.run_dir / (stem + ".png"));
    art.plot_paths.push_back(plot.image);
    art.plot_paths.push_back(plot.sidecar);
  }
  if (c.suite == Suite::ablation && outcome.results[0]) {
    std::vector<std::pair<std::string, evaluation::EvaluationReport>> runs;
    const auto removable = model::list_removable_head_layers(c.model);
    for (std::size_t i = 1; i < members.size(); ++i) {
      if (outcome.results[i]) runs.emplace_back(removable[i - 1], outcome.results[i]->report);
    }
    art.table_paths.push_back(art.run_dir / "ablation_deltas.csv");
    write_ablation_table(art.table_paths.back(), ablation_deltas(outcome.results[0]->report, runs));
  }

  const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  write_timing(art.run_dir, id, digest, members, outcome, total);
  if (outcome.failures > 0) {
    throw Error(ErrorCode::partial_suite, std::to_string(outcome.failures) + " of " + std::to_string(members.size()) +
                                              " suite members failed; partial results in " + art.run_dir.string());
  }
  return art;
}

RunArtifacts run_architecture_comparison(const ExperimentConfig& config, const RunOptions& options) {
  auto c = config;
  c.suite = Suite::compare_architectures;
  return run_experiment(c, options);
}

RunArtifacts run_optimizer_comparison(const ExperimentConfig& config, const RunOptions& options) {
  auto c = config;
  c.suite = Suite::compare_optimizers;
  return run_experiment(c, options);
}

RunArtifacts run_ablation(const ExperimentConfig& config, const RunOptions& options) {
  auto c = config;
  c.suite = Suite::ablation;
  return run_experiment(c, options);
}

}  // namespace lesiontl::experiment
