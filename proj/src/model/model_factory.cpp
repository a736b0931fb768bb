#include <cmath>
#include <cstdlib>
#include <fstream>

#include "lesiontl/errors.hpp"
#include "lesiontl/hash.hpp"
#include "lesiontl/model.hpp"
#include "lesiontl/rng.hpp"

namespace lesiontl::model {
namespace {

constexpr int kPool = 0;
// Channel plans; kPool marks a 2x2/2 max-pool closing a block.
const std::vector<int> kVgg16 = {64, 64, kPool, 128, 128, kPool, 256, 256, 256, kPool,
                                 512, 512, 512, kPool, 512, 512, 512, kPool};
const std::vector<int> kVgg19 = {64, 64, kPool, 128, 128, kPool, 256, 256, 256, 256, kPool,
                                 512, 512, 512, 512, kPool, 512, 512, 512, 512, kPool};

// Small output weights keep the initial logits near zero.
constexpr double kOutputInitStd = 1e-3;

template <typename T>
void add_vgg(nn::Network<T>& net, const std::vector<int>& plan) {
  std::size_t channels = 3;
  int block = 1;
  int index = 1;
  for (int width : plan) {
    if (width == kPool) {
      net.add(std::make_unique<nn::MaxPool2d<T>>("pool" + std::to_string(block), 2, 2));
      ++block;
      index = 1;
      continue;
    }
    const auto out = static_cast<std::size_t>(width);
    net.add(std::make_unique<nn::Conv2d<T>>("conv" + std::to_string(block) + "_" + std::to_string(index), channels,
                                            out, 3, 1, 1));
    channels = out;
    ++index;
  }
}

template <typename T>
void add_alexnet(nn::Network<T>& net) {
  net.add(std::make_unique<nn::Conv2d<T>>("conv1", 3, 64, 11, 4, 2));
  net.add(std::make_unique<nn::MaxPool2d<T>>("pool1", 3, 2));
  net.add(std::make_unique<nn::Conv2d<T>>("conv2", 64, 192, 5, 1, 2));
  net.add(std::make_unique<nn::MaxPool2d<T>>("pool2", 3, 2));
  net.add(std::make_unique<nn::Conv2d<T>>("conv3", 192, 384, 3, 1, 1));
  net.add(std::make_unique<nn::Conv2d<T>>("conv4", 384, 256, 3, 1, 1));
  net.add(std::make_unique<nn::Conv2d<T>>("conv5", 256, 256, 3, 1, 1));
  net.add(std::make_unique<nn::MaxPool2d<T>>("pool5", 3, 2));
}

template <typename T>
void add_tiny(nn::Network<T>& net) {
  net.add(std::make_unique<nn::Conv2d<T>>("conv1", 3, 2, 3, 1, 1));
  net.add(std::make_unique<nn::MaxPool2d<T>>("pool1", 2, 2));
}

template <typename T>
void initialise(nn::Network<T>& net, std::uint64_t seed) {
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto& layer = net.layer(i);
    auto params = layer.parameters();
    if (params.empty()) continue;
    Rng rng(derive_seed(seed, i));
    auto* weight = params[0];
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < weight->dims.size(); ++d) fan_in *= weight->dims[d];
    const double std_dev =
        layer.role() == nn::LayerRole::output ? kOutputInitStd : std::sqrt(2.0 / static_cast<double>(fan_in));
    for (auto& w : weight->value) w = static_cast<T>(rng.normal() * std_dev);
    for (std::size_t p = 1; p < params.size(); ++p) std::fill(params[p]->value.begin(), params[p]->value.end(), T(0));
  }
}

std::filesystem::path cache_dir(const std::optional<std::filesystem::path>& weights_dir) {
  if (weights_dir) return *weights_dir;
  if (const char* env = std::getenv(kCacheEnv); env != nullptr && *env != '\0') return env;
  return {};
}

}  // namespace

template <typename T>
std::unique_ptr<nn::Network<T>> build_network(const ModelSpec& spec, std::uint64_t init_seed) {
  spec.validate();
  const auto side = static_cast<std::size_t>(spec.input_size);
  auto net = std::make_unique<nn::Network<T>>(nn::FeatureShape{3, side, side});
  try {
    switch (spec.backbone_id) {
      case BackboneId::vgg16: add_vgg(*net, kVgg16); break;
      case BackboneId::vgg19: add_vgg(*net, kVgg19); break;
      case BackboneId::alexnet_modified: add_alexnet(*net); break;
      case BackboneId::tiny: add_tiny(*net); break;
    }
    net->add(std::make_unique<nn::Flatten<T>>("flatten"));
    std::size_t features = net->output_shape().size();
    for (std::size_t i = 0; i < spec.head_widths.size(); ++i) {
      const auto width = static_cast<std::size_t>(spec.head_widths[i]);
      net->add(std::make_unique<nn::Dense<T>>("fc" + std::to_string(i + 1), features, width, nn::Activation::relu,
                                              spec.dropout_rate, nn::LayerRole::head));
      features = width;
    }
    net->add(std::make_unique<nn::Dense<T>>("output", features, static_cast<std::size_t>(spec.num_classes),
                                            nn::Activation::none, 0.0, nn::LayerRole::output));
  } catch (const std::invalid_argument& e) {
    throw Error(ErrorCode::spec, std::string("input_size incompatible with backbone: ") + e.what());
  }
  initialise(*net, init_seed);
  apply_freeze_policy(*net, spec.backbone_id, spec.freeze);
  return net;
}

template <typename T>
ModelSummary apply_freeze_policy(nn::Network<T>& net, BackboneId backbone, const FreezePolicy& policy) {
  const int available = backbone_weight_layers(backbone);
  if (policy.freeze_first_n < 0 || policy.freeze_first_n > available) {
    throw Error(ErrorCode::policy, "freeze_first_n=" + std::to_string(policy.freeze_first_n) + " exceeds the " +
                                       std::to_string(available) + " weight-bearing backbone layers");
  }
  int index = 0;
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto& layer = net.layer(i);
    if (!layer.has_weights()) continue;
    if (layer.role() == nn::LayerRole::backbone) {
      layer.set_frozen(index < policy.freeze_first_n || policy.freeze_backbone_rest);
      ++index;
    } else {
      layer.set_frozen(false);
    }
  }
  return summarize(net);
}

template std::unique_ptr<nn::Network<float>> build_network<float>(const ModelSpec&, std::uint64_t);
template std::unique_ptr<nn::Network<double>> build_network<double>(const ModelSpec&, std::uint64_t);
template ModelSummary apply_freeze_policy<float>(nn::Network<float>&, BackboneId, const FreezePolicy&);
template ModelSummary apply_freeze_policy<double>(nn::Network<double>&, BackboneId, const FreezePolicy&);

std::filesystem::path pretrained_weights_path(BackboneId id, const std::optional<std::filesystem::path>& weights_dir) {
  const auto dir = cache_dir(weights_dir);
  if (dir.empty()) return {};
  return dir / (std::string(to_string(id)) + ".ltlw");
}

BuiltModel build_model(const ModelSpec& spec, std::uint64_t init_seed,
                       const std::optional<std::filesystem::path>& weights_dir) {
  BuiltModel built;
  built.model = build_network<float>(spec, init_seed);
  if (spec.pretrained) {
    const auto path = pretrained_weights_path(spec.backbone_id, weights_dir);
    if (path.empty()) {
      throw Error(ErrorCode::weight_load, std::string("pretrained weights requested but no cache directory set (") +
                                              kCacheEnv + ")");
    }
    if (!std::filesystem::is_regular_file(path)) {
      throw Error(ErrorCode::weight_load, "missing pretrained weight file " + path.string());
    }
    assign_weights(*built.model, read_weights(path), /*backbone_only=*/true);
    built.weights_sha256 = sha256_file(path);
  }
  built.summary = apply_freeze_policy(*built.model, spec.backbone_id, spec.freeze);
  return built;
}

std::vector<std::string> list_removable_head_layers(const ModelSpec& spec) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < spec.head_widths.size(); ++i) names.push_back("fc" + std::to_string(i + 1));
  return names;
}

ModelSpec without_head_layer(const ModelSpec& spec, const std::string& layer_name) {
  const auto names = list_removable_head_layers(spec);
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == layer_name) {
      ModelSpec out = spec;
      out.head_widths.erase(out.head_widths.begin() + static_cast<std::ptrdiff_t>(i));
      return out;
    }
  }
  throw Error(ErrorCode::spec, "'" + layer_name + "' is not a removable head layer");
}

void export_model(const std::filesystem::path& dir, const Model& model, const ModelSpec& spec) {
  std::filesystem::create_directories(dir);
  write_weights(dir / "weights.ltlw", collect_weights(model));
  std::ofstream out(dir / "model_spec.json", std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::io, "cannot write " + (dir / "model_spec.json").string());
  out << nlohmann::json(spec).dump(2) << '\n';
}

BuiltModel load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model_spec.json");
  if (!in) throw Error(ErrorCode::weight_load, "missing " + (dir / "model_spec.json").string());
  const ModelSpec spec = nlohmann::json::parse(in).get<ModelSpec>();
  BuiltModel built;
  built.model = build_network<float>(spec, 0);
  assign_weights(*built.model, read_weights(dir / "weights.ltlw"), /*backbone_only=*/false);
  built.weights_sha256 = sha256_file(dir / "weights.ltlw");
  built.summary = apply_freeze_policy(*built.model, spec.backbone_id, spec.freeze);
  return built;
}

}  // namespace lesiontl::model
