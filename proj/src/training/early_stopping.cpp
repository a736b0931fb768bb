#include <algorithm>
#include <stdexcept>

#include "lesiontl/training.hpp"

namespace lesiontl::training {

double monitored_value(const EpochRecord& record, Monitor monitor) {
  return monitor == Monitor::val_loss ? record.val_loss : record.val_accuracy;
}

StopDecision early_stop_check(std::span<const double> monitored, bool higher_is_better, int patience,
                              double min_delta) {
  if (monitored.empty()) throw std::invalid_argument("early_stop_check needs at least one epoch");
  // Work on a "lower is better" scale.
  const auto score = [&](std::size_t i) { return higher_is_better ? -monitored[i] : monitored[i]; };
  double best = score(0);
  std::size_t best_index = 0;
  std::size_t last_improvement = 0;
  for (std::size_t i = 1; i < monitored.size(); ++i) {
    const double s = score(i);
    if (s < best - min_delta) last_improvement = i;
    if (s < best) {
      best = s;
      best_index = i;
    }
  }
  const auto wait = static_cast<std::size_t>(std::max(patience, 1));
  StopDecision d;
  d.best_epoch = static_cast<int>(best_index) + 1;
  d.stop = monitored.size() - 1 - last_improvement >= wait;
  return d;
}

StopDecision early_stop_check(std::span<const EpochRecord> history, const EarlyStopSpec& spec) {
  std::vector<double> values;
  values.reserve(history.size());
  for (const auto& r : history) values.push_back(monitored_value(r, spec.monitor));
  auto d = early_stop_check(values, spec.monitor == Monitor::val_accuracy, spec.patience, spec.min_delta);
  if (!spec.enabled) d.stop = false;
  return d;
}

}  // namespace lesiontl::training
