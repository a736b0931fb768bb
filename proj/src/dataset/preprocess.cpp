#include "lesiontl/dataset.hpp"
#include "lesiontl/errors.hpp"
#include "lesiontl/simd/kernels.hpp"

namespace lesiontl::dataset {

PreprocessSpec PreprocessSpec::for_backbone(BackboneId id) {
  // All shipped backbones were pretrained on the same generic image set with
  // per-channel standardisation.
  PreprocessSpec spec;
  spec.backbone_id = id;
  spec.channel_means = {0.485f, 0.456f, 0.406f};
  spec.channel_stds = {0.229f, 0.224f, 0.225f};
  return spec;
}

void PreprocessSpec::validate() const {
  if (target_height != 224 || target_width != 224) {
    throw Error(ErrorCode::spec, "preprocess target must be 224x224");
  }
  for (float s : channel_stds) {
    if (!(s > 0.0f)) throw Error(ErrorCode::spec, "channel standard deviations must be positive");
  }
}

std::vector<float> preprocess(const Image& image, const PreprocessSpec& spec) {
  spec.validate();
  std::vector<float> planes = resize_bilinear_planar(image, spec.target_height, spec.target_width);
  const std::size_t plane = static_cast<std::size_t>(spec.target_height) * spec.target_width;
  const auto& k = simd::active();
  for (std::size_t c = 0; c < 3; ++c) {
    float* p = planes.data() + c * plane;
    k.normalize_pixels(p, p, plane, spec.channel_means[c], spec.channel_stds[c]);
  }
  return planes;
}

std::vector<float> preprocess_image(const std::filesystem::path& path, const PreprocessSpec& spec) {
  return preprocess(read_image(path), spec);
}

}  // namespace lesiontl::dataset
