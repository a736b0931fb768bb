#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lesiontl/backbone.hpp"
#include "lesiontl/nn/network.hpp"

namespace lesiontl::model {

using Model = nn::Network<float>;

struct FreezePolicy {
  int freeze_first_n = 3;              // earliest weight-bearing backbone layers kept fixed
  bool freeze_backbone_rest = false;   // also freeze every later backbone layer
};

struct ModelSpec {
  BackboneId backbone_id = BackboneId::vgg19;
  bool pretrained = true;
  int num_classes = 2;
  double dropout_rate = 0.5;
  std::vector<int> head_widths{4096, 4096};
  FreezePolicy freeze;
  int input_size = 224;  // square input side

  /// Throws Error(ErrorCode::spec) or Error(ErrorCode::policy).
  void validate() const;
};

void to_json(nlohmann::json& j, const FreezePolicy& p);
void from_json(const nlohmann::json& j, FreezePolicy& p);
void to_json(nlohmann::json& j, const ModelSpec& s);
void from_json(const nlohmann::json& j, ModelSpec& s);

struct LayerSummary {
  std::string name;
  std::string kind;
  std::string output_shape;
  std::size_t params = 0;
  bool trainable = false;
};

struct ModelSummary {
  std::vector<LayerSummary> layers;
  std::size_t total_params = 0;
  std::size_t trainable_params = 0;
};

template <typename T>
ModelSummary summarize(const nn::Network<T>& net) {
  ModelSummary s;
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto& layer = net.layer(i);
    const std::size_t params = layer.parameter_count();
    s.layers.push_back({layer.name(), std::string(layer.kind()), net.layer_output_shape(i).to_string(), params,
                        layer.trainable()});
    s.total_params += params;
    if (layer.trainable()) s.trainable_params += params;
  }
  return s;
}

void write_summary_csv(const std::filesystem::path& path, const ModelSummary& summary);

/// Number of weight-bearing layers in the backbone.
int backbone_weight_layers(BackboneId id);

/// Builds the layer stack and initialises it (He-normal hidden layers, a
/// small-variance output layer, zero biases) from `init_seed`. Pretrained
/// weights are not loaded here.
template <typename T>
std::unique_ptr<nn::Network<T>> build_network(const ModelSpec& spec, std::uint64_t init_seed);

/// Marks the first freeze_first_n weight-bearing backbone layers (and, with
/// freeze_backbone_rest, the remaining backbone) non-trainable.
template <typename T>
ModelSummary apply_freeze_policy(nn::Network<T>& net, BackboneId backbone, const FreezePolicy& policy);

struct BuiltModel {
  std::unique_ptr<Model> model;
  ModelSummary summary;
  std::string weights_sha256;  // empty when no pretrained file was loaded
};

/// Environment variable naming the pretrained-weight cache directory.
inline constexpr const char* kCacheEnv = "LESIONTL_CACHE";

/// `<cache>/<backbone>.ltlw`, where cache is `weights_dir` or $LESIONTL_CACHE.
std::filesystem::path pretrained_weights_path(BackboneId id,
                                              const std::optional<std::filesystem::path>& weights_dir = std::nullopt);

/// Builds the network, loads pretrained backbone weights when requested, and
/// applies the freeze policy.
BuiltModel build_model(const ModelSpec& spec, std::uint64_t init_seed = 0,
                       const std::optional<std::filesystem::path>& weights_dir = std::nullopt);

/// Fully connected layers added on top of the backbone, in forward order.
/// The output layer is never listed.
std::vector<std::string> list_removable_head_layers(const ModelSpec& spec);

/// Spec with the named head layer removed.
ModelSpec without_head_layer(const ModelSpec& spec, const std::string& layer_name);

/// Writes `weights.ltlw` and `model_spec.json` into `dir`.
void export_model(const std::filesystem::path& dir, const Model& model, const ModelSpec& spec);
BuiltModel load_model(const std::filesystem::path& dir);

// Named-tensor weight container ("LTLW" little-endian float32).
struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<float> values;
};

void write_weights(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_weights(const std::filesystem::path& path);

std::vector<NamedTensor> collect_weights(const Model& model);

/// Copies matching tensors into the model. With `backbone_only`, head and
/// output layers are left untouched. Throws Error(ErrorCode::weight_load) on
/// a missing tensor or a shape mismatch.
void assign_weights(Model& model, const std::vector<NamedTensor>& tensors, bool backbone_only);

}  // namespace lesiontl::model
