#include "lesiontl/backbone.hpp"

namespace lesiontl {

std::string_view to_string(BackboneId id) {
  switch (id) {
    case BackboneId::vgg16: return "vgg16";
    case BackboneId::vgg19: return "vgg19";
    case BackboneId::alexnet_modified: return "alexnet_modified";
    case BackboneId::tiny: return "tiny";
  }
  return "unknown";
}

std::optional<BackboneId> parse_backbone(std::string_view name) {
  for (BackboneId id : {BackboneId::vgg16, BackboneId::vgg19, BackboneId::alexnet_modified, BackboneId::tiny}) {
    if (to_string(id) == name) return id;
  }
  return std::nullopt;
}

}  // namespace lesiontl
