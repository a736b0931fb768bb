#include <cstdio>
#include <fstream>
#include <sstream>

#include "lesiontl/csv.hpp"
#include "lesiontl/errors.hpp"
#include "lesiontl/evaluation.hpp"

namespace lesiontl::evaluation {

void to_json(nlohmann::json& j, const ConfusionMatrix& cm) {
  j = {{"tp", cm.tp}, {"fp", cm.fp}, {"tn", cm.tn}, {"fn", cm.fn}};
}

void from_json(const nlohmann::json& j, ConfusionMatrix& cm) {
  cm.tp = j.at("tp").get<std::uint64_t>();
  cm.fp = j.at("fp").get<std::uint64_t>();
  cm.tn = j.at("tn").get<std::uint64_t>();
  cm.fn = j.at("fn").get<std::uint64_t>();
}

void to_json(nlohmann::json& j, const MetricSet& m) {
  j = {{"accuracy", m.accuracy}, {"sensitivity", m.sensitivity}, {"specificity", m.specificity}};
}

void from_json(const nlohmann::json& j, MetricSet& m) {
  m.accuracy = j.at("accuracy").get<double>();
  m.sensitivity = j.at("sensitivity").get<double>();
  m.specificity = j.at("specificity").get<double>();
}

void to_json(nlohmann::json& j, const FoldResult& f) {
  j = {{"fold_index", f.fold_index}, {"failed", f.failed}, {"history_ref", f.history_ref}};
  if (f.failed) {
    j["error"] = f.error;
  } else {
    j["metrics"] = f.metrics;
    j["confusion"] = f.confusion;
  }
}

void from_json(const nlohmann::json& j, FoldResult& f) {
  f.fold_index = j.at("fold_index").get<int>();
  f.failed = j.value("failed", false);
  f.history_ref = j.value("history_ref", std::string());
  if (f.failed) {
    f.error = j.value("error", std::string());
  } else {
    f.metrics = j.at("metrics").get<MetricSet>();
    f.confusion = j.at("confusion").get<ConfusionMatrix>();
  }
}

void to_json(nlohmann::json& j, const KFoldSummary& s) {
  j = {{"k", s.k},
       {"per_fold", s.per_fold},
       {"mean_metrics", s.mean_metrics},
       {"std_metrics", s.std_metrics},
       {"std_kind", "population"},
       {"failed_folds", s.failed_folds}};
}

void from_json(const nlohmann::json& j, KFoldSummary& s) {
  s.k = j.at("k").get<int>();
  s.per_fold = j.at("per_fold").get<std::vector<FoldResult>>();
  s.mean_metrics = j.at("mean_metrics").get<MetricSet>();
  s.std_metrics = j.at("std_metrics").get<MetricSet>();
  s.failed_folds = j.value("failed_folds", 0);
}

void to_json(nlohmann::json& j, const EvaluationReport& r) {
  j = nlohmann::json::object();
  j["schema_version"] = r.schema_version;
  j["architecture"] = r.architecture;
  j["config_digest"] = r.config_digest;
  j["metric_definitions"] = r.metric_definitions;
  j["train_accuracy"] = r.train_accuracy ? nlohmann::json(*r.train_accuracy) : nlohmann::json();
  j["val_accuracy"] = r.val_accuracy ? nlohmann::json(*r.val_accuracy) : nlohmann::json();
  j["test_metrics"] = r.test_metrics ? nlohmann::json(*r.test_metrics) : nlohmann::json();
  j["test_confusion"] = r.test_confusion ? nlohmann::json(*r.test_confusion) : nlohmann::json();
  j["kfold"] = r.kfold ? nlohmann::json(*r.kfold) : nlohmann::json();
  j["provenance"] = r.provenance;
}

namespace {

template <typename U>
std::optional<U> optional_field(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<U>();
}

}  // namespace

void from_json(const nlohmann::json& j, EvaluationReport& r) {
  if (!j.contains("schema_version")) throw Error(ErrorCode::schema, "report lacks schema_version");
  r.schema_version = j.at("schema_version").get<int>();
  r.architecture = j.at("architecture").get<std::string>();
  r.config_digest = j.value("config_digest", std::string());
  r.metric_definitions = j.value("metric_definitions", std::string());
  r.train_accuracy = optional_field<double>(j, "train_accuracy");
  r.val_accuracy = optional_field<double>(j, "val_accuracy");
  r.test_metrics = optional_field<MetricSet>(j, "test_metrics");
  r.test_confusion = optional_field<ConfusionMatrix>(j, "test_confusion");
  r.kfold = optional_field<KFoldSummary>(j, "kfold");
  r.provenance = j.value("provenance", nlohmann::json::object());
}

void write_report(const std::filesystem::path& path, const EvaluationReport& report) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + path.string());
  out << nlohmann::json(report).dump(2) << '\n';
}

EvaluationReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in).get<EvaluationReport>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::schema, path.string() + ": " + e.what());
  }
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", fraction * 100.0);
  return buf;
}

ComparisonTable aggregate_reports(std::span<const EvaluationReport> reports) {
  if (reports.empty()) throw Error(ErrorCode::schema, "no reports to aggregate");
  for (const auto& r : reports) {
    if (r.schema_version != reports.front().schema_version) {
      throw Error(ErrorCode::schema, "reports use different schema versions");
    }
    if (r.metric_definitions != reports.front().metric_definitions) {
      throw Error(ErrorCode::schema, "reports use different metric definitions");
    }
  }
  ComparisonTable t;
  t.header = {"architecture",    "train_accuracy",   "validation_accuracy", "test_accuracy",
              "kfold_accuracy",  "test_sensitivity", "test_specificity"};
  const auto cell = [](const std::optional<double>& v) { return v ? format_percent(*v) : std::string("-"); };
  for (const auto& r : reports) {
    std::optional<double> test_acc, sens, spec, kfold_acc;
    if (r.test_metrics) {
      test_acc = r.test_metrics->accuracy;
      sens = r.test_metrics->sensitivity;
      spec = r.test_metrics->specificity;
    }
    if (r.kfold && r.kfold->failed_folds < r.kfold->k) kfold_acc = r.kfold->mean_metrics.accuracy;
    t.rows.push_back({r.architecture, cell(r.train_accuracy), cell(r.val_accuracy), cell(test_acc),
                      cell(kfold_acc), cell(sens), cell(spec)});
  }
  return t;
}

std::string render_csv(const ComparisonTable& table) {
  std::string out = csv::join(table.header) + "\n";
  for (const auto& row : table.rows) out += csv::join(row) + "\n";
  return out;
}

std::string render_text(const ComparisonTable& table) {
  std::vector<std::size_t> width(table.header.size(), 0);
  const auto widen = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size() && c < width.size(); ++c) width[c] = std::max(width[c], row[c].size());
  };
  widen(table.header);
  for (const auto& row : table.rows) widen(row);

  std::ostringstream out;
  const auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      const bool left = c == 0;
      const std::string pad(width[c] - row[c].size(), ' ');
      if (c > 0) out << "  ";
      out << (left ? row[c] + pad : pad + row[c]);
    }
    out << '\n';
  };
  emit(table.header);
  std::size_t total = 0;
  for (auto w : width) total += w;
  out << std::string(total + 2 * (width.size() - 1), '-') << '\n';
  for (const auto& row : table.rows) emit(row);
  return out.str();
}

}  // namespace lesiontl::evaluation
