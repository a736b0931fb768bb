#include "lesiontl/csv.hpp"
#include "lesiontl/errors.hpp"
#include "lesiontl/model.hpp"

namespace lesiontl::model {

int backbone_weight_layers(BackboneId id) {
  switch (id) {
    case BackboneId::vgg16: return 13;
    case BackboneId::vgg19: return 16;
    case BackboneId::alexnet_modified: return 5;
    case BackboneId::tiny: return 1;
  }
  return 0;
}

void ModelSpec::validate() const {
  if (num_classes < 2) throw Error(ErrorCode::spec, "num_classes must be at least 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw Error(ErrorCode::spec, "dropout_rate must lie in [0, 1)");
  if (head_widths.empty()) throw Error(ErrorCode::spec, "head_widths must name at least one fully connected layer");
  for (int w : head_widths) {
    if (w <= 0) throw Error(ErrorCode::spec, "head widths must be positive");
  }
  if (input_size <= 0) throw Error(ErrorCode::spec, "input_size must be positive");
  if (freeze.freeze_first_n < 0 || freeze.freeze_first_n > backbone_weight_layers(backbone_id)) {
    throw Error(ErrorCode::policy, "freeze_first_n=" + std::to_string(freeze.freeze_first_n) + " exceeds the " +
                                       std::to_string(backbone_weight_layers(backbone_id)) +
                                       " weight-bearing layers of " + std::string(to_string(backbone_id)));
  }
}

void to_json(nlohmann::json& j, const FreezePolicy& p) {
  j = {{"freeze_first_n", p.freeze_first_n}, {"freeze_backbone_rest", p.freeze_backbone_rest}};
}

void from_json(const nlohmann::json& j, FreezePolicy& p) {
  p.freeze_first_n = j.value("freeze_first_n", p.freeze_first_n);
  p.freeze_backbone_rest = j.value("freeze_backbone_rest", p.freeze_backbone_rest);
}

void to_json(nlohmann::json& j, const ModelSpec& s) {
  j = {{"backbone", std::string(to_string(s.backbone_id))},
       {"pretrained", s.pretrained},
       {"num_classes", s.num_classes},
       {"dropout_rate", s.dropout_rate},
       {"head_widths", s.head_widths},
       {"freeze", s.freeze},
       {"input_size", s.input_size}};
}

void from_json(const nlohmann::json& j, ModelSpec& s) {
  if (j.contains("backbone")) {
    const auto name = j.at("backbone").get<std::string>();
    const auto id = parse_backbone(name);
    if (!id) throw Error(ErrorCode::spec, "unknown backbone '" + name + "'");
    s.backbone_id = *id;
  }
  s.pretrained = j.value("pretrained", s.pretrained);
  s.num_classes = j.value("num_classes", s.num_classes);
  s.dropout_rate = j.value("dropout_rate", s.dropout_rate);
  s.head_widths = j.value("head_widths", s.head_widths);
  if (j.contains("freeze")) s.freeze = j.at("freeze").get<FreezePolicy>();
  s.input_size = j.value("input_size", s.input_size);
}

void write_summary_csv(const std::filesystem::path& path, const ModelSummary& summary) {
  std::vector<csv::Row> rows;
  for (const auto& l : summary.layers) {
    rows.push_back({l.name, l.kind, l.output_shape, std::to_string(l.params), l.trainable ? "true" : "false"});
  }
  csv::write(path, {"name", "kind", "output_shape", "params", "trainable"}, rows);
}

}  // namespace lesiontl::model
