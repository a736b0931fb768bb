#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "lesiontl/errors.hpp"
#include "lesiontl/rng.hpp"
#include "lesiontl/training.hpp"

namespace lesiontl::training {
namespace {

constexpr std::uint64_t kOrderStream = 0x0bde7;
constexpr std::uint64_t kDropoutStream = 0xd40b;

using Snapshot = std::vector<std::vector<float>>;

Snapshot snapshot(std::span<nn::Parameter<float>* const> params) {
  Snapshot s;
  s.reserve(params.size());
  for (const auto* p : params) s.push_back(p->value);
  return s;
}

void restore(std::span<nn::Parameter<float>* const> params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = s[i];
}

void check_sets(const SampleSource& train_set, const SampleSource& val_set) {
  if (train_set.size() == 0) throw Error(ErrorCode::data, "training set is empty");
  if (val_set.size() == 0) throw Error(ErrorCode::data, "validation set is empty");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < train_set.size(); ++i) ids.insert(train_set.id(i));
  for (std::size_t i = 0; i < val_set.size(); ++i) {
    if (ids.count(val_set.id(i)) != 0) {
      throw Error(ErrorCode::data, "sample " + val_set.id(i) + " is in both the training and validation sets");
    }
  }
}

}  // namespace

void InMemorySource::add(std::string id, int label, std::vector<float> values) {
  if (values.size() != shape_.size()) throw Error(ErrorCode::shape, "sample size does not match source shape");
  ids_.push_back(std::move(id));
  labels_.push_back(label);
  data_.insert(data_.end(), values.begin(), values.end());
}

void InMemorySource::load(std::size_t i, float* dst) const {
  const auto n = shape_.size();
  std::copy_n(data_.data() + i * n, n, dst);
}

ManifestSource::ManifestSource(const dataset::DatasetManifest& manifest, std::span<const std::string> ids,
                               dataset::PreprocessSpec spec, bool cache)
    : spec_(spec), cache_(cache) {
  spec_.validate();
  samples_.reserve(ids.size());
  for (const auto& id : ids) {
    const auto* s = manifest.find(id);
    if (s == nullptr) throw Error(ErrorCode::data, "id " + id + " is not in the manifest");
    samples_.push_back(*s);
  }
}

nn::FeatureShape ManifestSource::shape() const {
  return {3, static_cast<std::size_t>(spec_.target_height), static_cast<std::size_t>(spec_.target_width)};
}

void ManifestSource::load(std::size_t i, float* dst) const {
  if (cache_) {
    std::lock_guard lock(mutex_);
    if (auto it = cached_.find(i); it != cached_.end()) {
      std::copy(it->second.begin(), it->second.end(), dst);
      return;
    }
  }
  auto values = dataset::preprocess_image(samples_[i].image_path, spec_);
  std::copy(values.begin(), values.end(), dst);
  if (cache_) {
    std::lock_guard lock(mutex_);
    cached_.emplace(i, std::move(values));
  }
}

std::vector<int> load_batch(const SampleSource& source, std::span<const std::size_t> indices,
                            nn::Tensor<float>& batch) {
  batch.reshape(indices.size(), source.shape());
  std::vector<int> labels;
  labels.reserve(indices.size());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    source.load(indices[b], batch.sample(b));
    labels.push_back(source.label(indices[b]));
  }
  return labels;
}

Evaluation evaluate(model::Model& model, const SampleSource& source, int batch_size) {
  if (source.shape() != model.input_shape()) throw Error(ErrorCode::shape, "sample shape does not match model input");
  Evaluation ev;
  ev.predictions.reserve(source.size());
  std::size_t correct = 0;
  nn::Tensor<float> batch;
  std::vector<std::size_t> indices;
  const auto step = static_cast<std::size_t>(std::max(batch_size, 1));
  for (std::size_t start = 0; start < source.size(); start += step) {
    indices.resize(std::min(step, source.size() - start));
    std::iota(indices.begin(), indices.end(), start);
    const auto labels = load_batch(source, indices, batch);
    const auto& logits = model.forward(batch, nn::Mode::eval);
    const auto res = nn::softmax_cross_entropy(logits, std::span<const int>(labels));
    ev.loss += res.loss * static_cast<double>(indices.size());
    correct += res.correct;
    for (std::size_t b = 0; b < indices.size(); ++b) {
      ev.predictions.push_back(nn::argmax(logits.sample(b), logits.shape.size()));
    }
  }
  if (source.size() > 0) {
    ev.loss /= static_cast<double>(source.size());
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(source.size());
  }
  return ev;
}

TrainedModel train(model::Model& model, const SampleSource& train_set, const SampleSource& val_set,
                   const TrainingConfig& config, const TrainOptions& options) {
  config.validate();
  check_sets(train_set, val_set);
  if (train_set.shape() != model.input_shape() || val_set.shape() != model.input_shape()) {
    throw Error(ErrorCode::shape, "sample shape does not match model input");
  }
  if (options.checkpoint_dir && options.spec == nullptr) {
    throw Error(ErrorCode::config, "checkpointing needs the model spec");
  }

  auto optimizer = make_optimizer(config.optimizer_kind, config.effective_learning_rate(), config.momentum);
  Rng order_rng(derive_seed(config.seed, kOrderStream));
  Rng dropout_rng(derive_seed(config.seed, kDropoutStream));
  model.set_random_source(&dropout_rng);
  model.prepare_gradients();
  const auto params = model.trainable_parameters();

  TrainedModel result;
  result.model = &model;
  result.config = config;
  result.optimizer = optimizer->describe();

  Snapshot best_weights;
  int best_epoch = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto step = static_cast<std::size_t>(config.batch_size);
  nn::Tensor<float> batch;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += step) {
      const std::span<const std::size_t> idx(order.data() + start, std::min(step, order.size() - start));
      const auto labels = load_batch(train_set, idx, batch);
      const auto& logits = model.forward(batch, nn::Mode::train, /*keep_activations=*/true);
      const auto res = nn::softmax_cross_entropy(logits, std::span<const int>(labels));
      if (!std::isfinite(res.loss)) {
        model.release_activations();
        model.set_random_source(nullptr);
        throw DivergenceError(epoch, "non-finite training loss at epoch " + std::to_string(epoch));
      }
      loss_sum += res.loss * static_cast<double>(idx.size());
      correct += res.correct;
      model.zero_gradients();
      model.backward(res.grad_logits);
      optimizer->step(params);
    }
    model.release_activations();

    const auto val = evaluate(model, val_set, config.batch_size);
    if (!std::isfinite(val.loss)) {
      model.set_random_source(nullptr);
      throw DivergenceError(epoch, "non-finite validation loss at epoch " + std::to_string(epoch));
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train_set.size());
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_set.size());
    rec.val_loss = val.loss;
    rec.val_accuracy = val.accuracy;
    result.history.push_back(rec);

    const auto decision = early_stop_check(result.history, config.early_stopping);
    if (decision.best_epoch != best_epoch) {
      best_epoch = decision.best_epoch;
      best_weights = snapshot(params);
    }
    if (options.checkpoint_dir && options.save_every_epoch) {
      model::export_model(*options.checkpoint_dir / ("epoch_" + std::to_string(epoch)), model, *options.spec);
    }
    if (options.on_epoch) options.on_epoch(rec);
    if (decision.stop) {
      result.stopped_early = epoch < config.max_epochs;
      break;
    }
  }
  result.best_epoch = best_epoch;

  const bool restore_best = config.early_stopping.enabled && config.early_stopping.restore_best;
  const bool best_is_last = best_epoch == static_cast<int>(result.history.size());
  if (options.checkpoint_dir) {
    if (best_is_last || restore_best) {
      if (!best_is_last) restore(params, best_weights);
      model::export_model(*options.checkpoint_dir / "best", model, *options.spec);
    } else {
      auto last = snapshot(params);
      restore(params, best_weights);
      model::export_model(*options.checkpoint_dir / "best", model, *options.spec);
      restore(params, last);
    }
  } else if (restore_best && !best_is_last) {
    restore(params, best_weights);
  }
  result.restored_best = restore_best;
  model.set_random_source(nullptr);
  return result;
}

}  // namespace lesiontl::training
