#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lesiontl {

enum class ErrorCode {
  structural,          // dataset layout is wrong
  empty_class,         // a class directory holds no usable image
  decode,              // image could not be decoded
  stratification,      // stratified split cannot be honoured
  insufficient_data,   // fewer samples than folds
  spec,                // malformed model spec
  weight_load,         // pretrained weights missing or inconsistent
  policy,              // freeze policy invalid for the backbone
  config,              // invalid training/optimizer configuration
  data,                // empty or overlapping train/validation data
  divergence,          // non-finite loss
  shape,               // mismatched lengths or tensor shapes
  undefined_metric,    // metric undefined because a class is absent
  schema,              // report schemas cannot be combined
  validation,          // experiment config failed validation
  ablation_impossible, // no removable head layer
  plot,                // nothing to plot
  partial_suite,       // some members of a suite failed
  io,                  // filesystem failure
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class DivergenceError : public Error {
 public:
  DivergenceError(int epoch, const std::string& message);
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class UndefinedMetricError : public Error {
 public:
  explicit UndefinedMetricError(std::string metric);
  const std::string& metric() const noexcept { return metric_; }

 private:
  std::string metric_;
};

/// Carries every violated field, not just the first.
class ValidationError : public Error {
 public:
  explicit ValidationError(std::vector<std::string> violations);
  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  std::vector<std::string> violations_;
};

/// True for errors that originate in dataset ingestion or partitioning.
bool is_dataset_error(ErrorCode code);

}  // namespace lesiontl
