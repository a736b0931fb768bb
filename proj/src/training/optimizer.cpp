#include <cmath>

#include "lesiontl/errors.hpp"
#include "lesiontl/training.hpp"

namespace lesiontl::training {

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::adam ? "adam" : "sgd"; }
std::string_view to_string(Monitor monitor) { return monitor == Monitor::val_loss ? "val_loss" : "val_accuracy"; }

std::optional<OptimizerKind> parse_optimizer(std::string_view text) {
  if (text == "adam") return OptimizerKind::adam;
  if (text == "sgd") return OptimizerKind::sgd;
  return std::nullopt;
}

std::optional<Monitor> parse_monitor(std::string_view text) {
  if (text == "val_loss") return Monitor::val_loss;
  if (text == "val_accuracy") return Monitor::val_accuracy;
  return std::nullopt;
}

double TrainingConfig::effective_learning_rate() const {
  if (learning_rate) return *learning_rate;
  return optimizer_kind == OptimizerKind::adam ? kDefaultAdamRate : kDefaultSgdRate;
}

std::vector<std::string> TrainingConfig::violations() const {
  std::vector<std::string> out;
  if (learning_rate && !(*learning_rate > 0.0 && std::isfinite(*learning_rate))) {
    out.push_back("training.learning_rate must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) out.push_back("training.momentum must lie in [0, 1)");
  if (max_epochs < 1) out.push_back("training.max_epochs must be at least 1");
  if (batch_size < 1) out.push_back("training.batch_size must be at least 1");
  if (early_stopping.patience < 0) out.push_back("training.early_stopping.patience must be non-negative");
  if (!(early_stopping.min_delta >= 0.0 && std::isfinite(early_stopping.min_delta))) {
    out.push_back("training.early_stopping.min_delta must be non-negative");
  }
  return out;
}

void TrainingConfig::validate() const {
  const auto v = violations();
  if (!v.empty()) throw Error(ErrorCode::config, v.front());
}

void to_json(nlohmann::json& j, const EarlyStopSpec& s) {
  j = {{"enabled", s.enabled},
       {"monitor", std::string(to_string(s.monitor))},
       {"patience", s.patience},
       {"min_delta", s.min_delta},
       {"restore_best", s.restore_best}};
}

void from_json(const nlohmann::json& j, EarlyStopSpec& s) {
  s.enabled = j.value("enabled", s.enabled);
  if (j.contains("monitor")) {
    const auto text = j.at("monitor").get<std::string>();
    const auto m = parse_monitor(text);
    if (!m) throw Error(ErrorCode::config, "unknown early-stopping monitor '" + text + "'");
    s.monitor = *m;
  }
  s.patience = j.value("patience", s.patience);
  s.min_delta = j.value("min_delta", s.min_delta);
  s.restore_best = j.value("restore_best", s.restore_best);
}

void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = {{"optimizer", std::string(to_string(c.optimizer_kind))},
       {"learning_rate", c.effective_learning_rate()},
       {"momentum", c.momentum},
       {"max_epochs", c.max_epochs},
       {"batch_size", c.batch_size},
       {"early_stopping", c.early_stopping},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, TrainingConfig& c) {
  if (j.contains("optimizer")) {
    const auto text = j.at("optimizer").get<std::string>();
    const auto k = parse_optimizer(text);
    if (!k) throw Error(ErrorCode::config, "unknown optimizer '" + text + "'");
    c.optimizer_kind = *k;
  }
  if (j.contains("learning_rate") && !j.at("learning_rate").is_null()) {
    c.learning_rate = j.at("learning_rate").get<double>();
  }
  c.momentum = j.value("momentum", c.momentum);
  c.max_epochs = j.value("max_epochs", c.max_epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("early_stopping")) c.early_stopping = j.at("early_stopping").get<EarlyStopSpec>();
  c.seed = j.value("seed", c.seed);
}

namespace {

class Sgd final : public Optimizer {
 public:
  Sgd(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

  OptimizerKind kind() const override { return OptimizerKind::sgd; }

  void step(std::span<nn::Parameter<float>* const> params) override {
    const auto& k = simd::active();
    for (auto* p : params) {
      auto& velocity = velocity_[p];
      if (velocity.size() != p->value.size()) velocity.assign(p->value.size(), 0.0f);
      k.sgd_update(p->value.data(), p->grad.data(), velocity.data(), p->value.size(), static_cast<float>(lr_),
                   static_cast<float>(momentum_));
    }
  }

  nlohmann::json describe() const override {
    return {{"kind", "sgd"}, {"learning_rate", lr_}, {"momentum", momentum_}};
  }

 private:
  double lr_;
  double momentum_;
  std::map<const void*, std::vector<float>> velocity_;
};

class Adam final : public Optimizer {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  OptimizerKind kind() const override { return OptimizerKind::adam; }

  void step(std::span<nn::Parameter<float>* const> params) override {
    ++t_;
    const simd::AdamStep s{static_cast<float>(lr_),
                           static_cast<float>(kAdamBeta1),
                           static_cast<float>(kAdamBeta2),
                           static_cast<float>(kAdamEpsilon),
                           static_cast<float>(1.0 - std::pow(kAdamBeta1, static_cast<double>(t_))),
                           static_cast<float>(1.0 - std::pow(kAdamBeta2, static_cast<double>(t_)))};
    const auto& k = simd::active();
    for (auto* p : params) {
      auto& st = state_[p];
      if (st.m.size() != p->value.size()) {
        st.m.assign(p->value.size(), 0.0f);
        st.v.assign(p->value.size(), 0.0f);
      }
      k.adam_update(p->value.data(), p->grad.data(), st.m.data(), st.v.data(), p->value.size(), s);
    }
  }

  nlohmann::json describe() const override {
    return {{"kind", "adam"},
            {"learning_rate", lr_},
            {"beta1", kAdamBeta1},
            {"beta2", kAdamBeta2},
            {"epsilon", kAdamEpsilon}};
  }

 private:
  struct Moments {
    std::vector<float> m, v;
  };
  double lr_;
  long long t_ = 0;
  std::map<const void*, Moments> state_;
};

}  // namespace

std::unique_ptr<Optimizer> make_optimizer(OptimizerKind kind, double learning_rate, double momentum) {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::config, "learning rate must be positive");
  }
  if (kind == OptimizerKind::adam) return std::make_unique<Adam>(learning_rate);
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error(ErrorCode::config, "momentum must lie in [0, 1)");
  return std::make_unique<Sgd>(learning_rate, momentum);
}

}  // namespace lesiontl::training
