#pragma once

#include <optional>
#include <string_view>

namespace lesiontl {

/// Convolutional feature extractors the factory can build. `tiny` is a
/// single 2-filter convolution block used for smoke runs and gradient checks.
enum class BackboneId { vgg16, vgg19, alexnet_modified, tiny };

std::string_view to_string(BackboneId id);
std::optional<BackboneId> parse_backbone(std::string_view name);

}  // namespace lesiontl
