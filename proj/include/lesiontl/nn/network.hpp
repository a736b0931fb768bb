#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "lesiontl/nn/layers.hpp"

namespace lesiontl::nn {

/// Row-wise softmax evaluated in double precision.
template <typename T>
void softmax_rows(const T* logits, std::size_t rows, std::size_t cols, T* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits + r * cols;
    const double peak = *std::max_element(z, z + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(static_cast<double>(z[j]) - peak);
    for (std::size_t j = 0; j < cols; ++j) {
      out[r * cols + j] = static_cast<T>(std::exp(static_cast<double>(z[j]) - peak) / total);
    }
  }
}

/// Index of the largest entry; ties resolve to the lowest index (benign).
template <typename T>
int argmax(const T* row, std::size_t cols) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < cols; ++j) {
    if (row[j] > row[best]) best = j;
  }
  return static_cast<int>(best);
}

template <typename T>
struct LossResult {
  double loss = 0.0;          // mean categorical cross-entropy
  std::size_t correct = 0;    // argmax hits
  Tensor<T> grad_logits;      // d(mean loss)/d(logits)
};

/// Softmax cross-entropy against integer class labels.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
  const std::size_t b = logits.batch;
  const std::size_t c = logits.shape.size();
  if (labels.size() != b) throw std::invalid_argument("label count does not match batch");
  LossResult<T> res;
  res.grad_logits.reshape(b, logits.shape);
  for (std::size_t n = 0; n < b; ++n) {
    const T* z = logits.sample(n);
    const auto y = static_cast<std::size_t>(labels[n]);
    if (y >= c) throw std::invalid_argument("label out of range");
    const double peak = *std::max_element(z, z + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += std::exp(static_cast<double>(z[j]) - peak);
    const double log_total = std::log(total) + peak;
    res.loss += log_total - static_cast<double>(z[y]);
    T* g = res.grad_logits.sample(n);
    for (std::size_t j = 0; j < c; ++j) {
      const double p = std::exp(static_cast<double>(z[j]) - log_total);
      g[j] = static_cast<T>((p - (j == y ? 1.0 : 0.0)) / static_cast<double>(b));
    }
    if (argmax(z, c) == labels[n]) ++res.correct;
  }
  res.loss /= static_cast<double>(b);
  return res;
}

/// Sequential network producing class logits; probabilities come from
/// predict_proba (softmax over the output layer).
template <typename T>
class Network {
 public:
  explicit Network(FeatureShape input) : input_(input) {}

  void add(std::unique_ptr<Layer<T>> layer) {
    shapes_.push_back(layer->output_shape(shapes_.empty() ? input_ : shapes_.back()));
    layers_.push_back(std::move(layer));
  }

  FeatureShape input_shape() const { return input_; }
  FeatureShape output_shape() const { return shapes_.empty() ? input_ : shapes_.back(); }
  std::size_t num_classes() const { return output_shape().size(); }
  std::size_t size() const { return layers_.size(); }
  Layer<T>& layer(std::size_t i) { return *layers_[i]; }
  const Layer<T>& layer(std::size_t i) const { return *layers_[i]; }
  FeatureShape layer_output_shape(std::size_t i) const { return shapes_[i]; }

  Layer<T>* find(std::string_view name) {
    for (auto& l : layers_) {
      if (l->name() == name) return l.get();
    }
    return nullptr;
  }

  void set_random_source(Rng* rng) { rng_ = rng; }

  /// Logits for a batch. With keep_activations every intermediate output is
  /// retained for backward().
  const Tensor<T>& forward(const Tensor<T>& input, Mode mode, bool keep_activations = false) {
    if (input.shape != input_) throw std::invalid_argument("network input shape mismatch");
    if (keep_activations) {
      acts_.resize(layers_.size() + 1);
      acts_[0] = input;
      for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->forward(acts_[i], acts_[i + 1], mode, rng_);
      kept_ = true;
      return acts_.back();
    }
    kept_ = false;
    acts_.clear();
    const Tensor<T>* cur = &input;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Tensor<T>& dst = scratch_[i % 2];
      layers_[i]->forward(*cur, dst, mode, rng_);
      cur = &dst;
    }
    if (layers_.empty()) {
      scratch_[0] = input;
      return scratch_[0];
    }
    return *cur;
  }

  Tensor<T> predict_proba(const Tensor<T>& input) {
    const Tensor<T>& logits = forward(input, Mode::eval);
    Tensor<T> probs(logits.batch, logits.shape);
    softmax_rows(logits.data.data(), logits.batch, logits.shape.size(), probs.data.data());
    return probs;
  }

  /// Allocates gradient buffers for trainable parameters and releases them
  /// for frozen ones.
  void prepare_gradients() {
    for (auto& l : layers_) {
      for (auto* p : l->parameters()) {
        if (l->trainable()) {
          p->grad.assign(p->value.size(), T(0));
        } else {
          p->grad.clear();
          p->grad.shrink_to_fit();
        }
      }
    }
  }

  void zero_gradients() {
    for (auto& l : layers_) {
      if (!l->trainable()) continue;
      for (auto* p : l->parameters()) std::fill(p->grad.begin(), p->grad.end(), T(0));
    }
  }

  /// Backpropagates from d(loss)/d(logits); accumulates into parameter
  /// gradients. Stops at the earliest trainable layer.
  void backward(const Tensor<T>& grad_logits) {
    if (!kept_) throw std::logic_error("backward requires a forward pass with kept activations");
    const auto first = first_trainable();
    if (!first) return;
    Tensor<T> grad = grad_logits;
    Tensor<T> next;
    for (std::size_t i = layers_.size(); i-- > *first;) {
      Tensor<T>* grad_in = i > *first ? &next : nullptr;
      layers_[i]->backward(acts_[i], acts_[i + 1], grad, grad_in);
      if (grad_in != nullptr) std::swap(grad, next);
    }
  }

  /// Drops retained activations (they can be large for deep backbones).
  void release_activations() {
    acts_.clear();
    acts_.shrink_to_fit();
    kept_ = false;
  }

  std::vector<Parameter<T>*> trainable_parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_) {
      if (!l->trainable()) continue;
      for (auto* p : l->parameters()) out.push_back(p);
    }
    return out;
  }

  std::vector<Parameter<T>*> all_parameters() {
    std::vector<Parameter<T>*> out;
    for (auto& l : layers_) {
      for (auto* p : l->parameters()) out.push_back(p);
    }
    return out;
  }

  std::vector<const Parameter<T>*> all_parameters() const {
    std::vector<const Parameter<T>*> out;
    for (const auto& l : layers_) {
      for (const auto* p : l->parameters()) out.push_back(p);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l->parameter_count();
    return n;
  }

  std::size_t trainable_parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) {
      if (l->trainable()) n += l->parameter_count();
    }
    return n;
  }

 private:
  std::optional<std::size_t> first_trainable() const {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i]->trainable()) return i;
    }
    return std::nullopt;
  }

  FeatureShape input_;
  std::vector<std::unique_ptr<Layer<T>>> layers_;
  std::vector<FeatureShape> shapes_;
  std::vector<Tensor<T>> acts_;
  Tensor<T> scratch_[2];
  bool kept_ = false;
  Rng* rng_ = nullptr;
};

}  // namespace lesiontl::nn
