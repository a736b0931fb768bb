#include <algorithm>
#include <atomic>
#include <cmath>
#include <set>
#include <thread>

#include "lesiontl/errors.hpp"
#include "lesiontl/evaluation.hpp"
#include "lesiontl/rng.hpp"

namespace lesiontl::evaluation {
namespace {

void assert_isolated(const FoldTask& task) {
  const std::set<std::string> train(task.train_ids.begin(), task.train_ids.end());
  for (const auto& id : task.eval_ids) {
    if (train.count(id) != 0) {
      throw Error(ErrorCode::data, "fold " + std::to_string(task.fold_index) + ": sample " + id +
                                       " is on both the train and evaluation side");
    }
  }
}

FoldResult run_fold(const FoldTask& task, const FoldRunner& runner) {
  FoldResult r;
  r.fold_index = task.fold_index;
  try {
    const auto outcome = runner(task);
    if (outcome.labels.size() != task.eval_ids.size()) {
      throw Error(ErrorCode::shape, "fold runner returned " + std::to_string(outcome.labels.size()) +
                                        " labels for " + std::to_string(task.eval_ids.size()) + " samples");
    }
    r.confusion = confusion_from_predictions(outcome.labels, outcome.predictions);
    r.metrics = metrics_from_confusion(r.confusion);
    r.history_ref = outcome.history_ref;
  } catch (const DivergenceError& e) {
    r.failed = true;
    r.error = e.what();
  }
  return r;
}

}  // namespace

void aggregate_folds(KFoldSummary& summary) {
  summary.failed_folds = 0;
  std::vector<const MetricSet*> done;
  for (const auto& f : summary.per_fold) {
    if (f.failed) {
      ++summary.failed_folds;
    } else {
      done.push_back(&f.metrics);
    }
  }
  summary.mean_metrics = {};
  summary.std_metrics = {};
  if (done.empty()) return;
  const auto n = static_cast<double>(done.size());
  for (double MetricSet::*field : {&MetricSet::accuracy, &MetricSet::sensitivity, &MetricSet::specificity}) {
    double sum = 0.0;
    for (const auto* m : done) sum += m->*field;
    const double mean = sum / n;
    double sq = 0.0;
    for (const auto* m : done) sq += (m->*field - mean) * (m->*field - mean);
    summary.mean_metrics.*field = mean;
    summary.std_metrics.*field = std::sqrt(sq / n);
  }
}

KFoldSummary kfold_cross_validate(const dataset::FoldPlan& plan, std::uint64_t base_seed, const FoldRunner& runner,
                                  int jobs) {
  if (plan.k < 2) throw Error(ErrorCode::config, "k-fold needs k >= 2");
  std::vector<FoldTask> tasks(static_cast<std::size_t>(plan.k));
  for (int f = 0; f < plan.k; ++f) {
    auto& t = tasks[static_cast<std::size_t>(f)];
    t.fold_index = f;
    t.eval_ids = plan.fold(f);
    t.train_ids = plan.outside(f);
    t.seed = base_seed + static_cast<std::uint64_t>(f);
    assert_isolated(t);
  }

  KFoldSummary summary;
  summary.k = plan.k;
  summary.per_fold.resize(tasks.size());
  const auto workers = static_cast<std::size_t>(std::clamp(jobs, 1, plan.k));
  if (workers == 1) {
    for (std::size_t f = 0; f < tasks.size(); ++f) summary.per_fold[f] = run_fold(tasks[f], runner);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(tasks.size());
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t f; (f = next++) < tasks.size();) {
          try {
            summary.per_fold[f] = run_fold(tasks[f], runner);
          } catch (...) {
            errors[f] = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }
  aggregate_folds(summary);
  return summary;
}

KFoldSummary kfold_cross_validate(const dataset::DatasetManifest& manifest, const dataset::FoldPlan& plan,
                                  const model::ModelSpec& spec, const training::TrainingConfig& config,
                                  const KFoldTrainingOptions& options) {
  const FoldRunner runner = [&](const FoldTask& task) {
    const auto train_side = dataset::subset(manifest, task.train_ids);
    const auto carve = dataset::split_train_test(train_side, options.validation_fraction, true,
                                                 derive_seed(task.seed, 0x7a1));
    training::ManifestSource train_set(manifest, carve.train_ids, options.preprocess);
    training::ManifestSource val_set(manifest, carve.test_ids, options.preprocess);
    training::ManifestSource eval_set(manifest, task.eval_ids, options.preprocess, /*cache=*/false);

    auto built = model::build_model(spec, task.seed, options.weights_dir);
    auto fold_config = config;
    fold_config.seed = task.seed;
    const auto trained = training::train(*built.model, train_set, val_set, fold_config);

    FoldOutcome out;
    if (options.output_dir) {
      const auto dir = *options.output_dir / ("fold_" + std::to_string(task.fold_index));
      std::filesystem::create_directories(dir);
      training::write_history_csv(dir / "history.csv", trained.history);
      out.history_ref = (std::filesystem::path("fold_" + std::to_string(task.fold_index)) / "history.csv").string();
    }
    const auto ev = training::evaluate(*built.model, eval_set, config.batch_size);
    for (std::size_t i = 0; i < eval_set.size(); ++i) {
      out.labels.push_back(dataset::label_from_index(eval_set.label(i)));
      out.predictions.push_back(dataset::label_from_index(ev.predictions[i]));
    }
    return out;
  };
  return kfold_cross_validate(plan, config.seed, runner, options.jobs);
}

}  // namespace lesiontl::evaluation
