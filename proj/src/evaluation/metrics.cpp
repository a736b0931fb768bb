#include "lesiontl/errors.hpp"
#include "lesiontl/evaluation.hpp"

namespace lesiontl::evaluation {
namespace {

void tally(ConfusionMatrix& cm, bool actual_positive, bool predicted_positive) {
  if (actual_positive) {
    ++(predicted_positive ? cm.tp : cm.fn);
  } else {
    ++(predicted_positive ? cm.fp : cm.tn);
  }
}

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorCode::shape, "labels (" + std::to_string(a) + ") and predictions (" + std::to_string(b) +
                                      ") differ in length");
  }
  if (a == 0) throw Error(ErrorCode::shape, "no predictions to evaluate");
}

double ratio(std::uint64_t num, std::uint64_t den) { return static_cast<double>(num) / static_cast<double>(den); }

}  // namespace

ConfusionMatrix confusion_from_predictions(std::span<const Label> labels, std::span<const Label> predicted) {
  check_lengths(labels.size(), predicted.size());
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    tally(cm, labels[i] == Label::melanoma, predicted[i] == Label::melanoma);
  }
  return cm;
}

ConfusionMatrix confusion_from_indices(std::span<const int> labels, std::span<const int> predicted) {
  check_lengths(labels.size(), predicted.size());
  ConfusionMatrix cm;
  const int positive = dataset::class_index(Label::melanoma);
  for (std::size_t i = 0; i < labels.size(); ++i) tally(cm, labels[i] == positive, predicted[i] == positive);
  return cm;
}

MetricSet metrics_from_confusion(const ConfusionMatrix& cm) {
  if (cm.tp + cm.fn == 0) throw UndefinedMetricError("sensitivity");
  if (cm.tn + cm.fp == 0) throw UndefinedMetricError("specificity");
  return {ratio(cm.tp + cm.tn, cm.total()), ratio(cm.tp, cm.tp + cm.fn), ratio(cm.tn, cm.tn + cm.fp)};
}

}  // namespace lesiontl::evaluation
