#include "lesiontl/errors.hpp"

namespace lesiontl {
namespace {

std::string join_violations(const std::vector<std::string>& violations) {
  std::string text = "invalid experiment configuration:";
  for (const auto& v : violations) text += "\n  - " + v;
  return text;
}

}  // namespace

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::structural: return "structural";
    case ErrorCode::empty_class: return "empty_class";
    case ErrorCode::decode: return "decode";
    case ErrorCode::stratification: return "stratification";
    case ErrorCode::insufficient_data: return "insufficient_data";
    case ErrorCode::spec: return "spec";
    case ErrorCode::weight_load: return "weight_load";
    case ErrorCode::policy: return "policy";
    case ErrorCode::config: return "config";
    case ErrorCode::data: return "data";
    case ErrorCode::divergence: return "divergence";
    case ErrorCode::shape: return "shape";
    case ErrorCode::undefined_metric: return "undefined_metric";
    case ErrorCode::schema: return "schema";
    case ErrorCode::validation: return "validation";
    case ErrorCode::ablation_impossible: return "ablation_impossible";
    case ErrorCode::plot: return "plot";
    case ErrorCode::partial_suite: return "partial_suite";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), code_(code) {}

DivergenceError::DivergenceError(int epoch, const std::string& message)
    : Error(ErrorCode::divergence, message), epoch_(epoch) {}

UndefinedMetricError::UndefinedMetricError(std::string metric)
    : Error(ErrorCode::undefined_metric, metric + " is undefined: its reference class is absent"),
      metric_(std::move(metric)) {}

ValidationError::ValidationError(std::vector<std::string> violations)
    : Error(ErrorCode::validation, join_violations(violations)),
      violations_(std::move(violations)) {}

bool is_dataset_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::structural:
    case ErrorCode::empty_class:
    case ErrorCode::decode:
    case ErrorCode::stratification:
    case ErrorCode::insufficient_data:
      return true;
    default:
      return false;
  }
}

}  // namespace lesiontl
