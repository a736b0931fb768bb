#pragma once

// Shared fixtures for the test binaries: scratch directories, synthetic image
// corpora and small models.

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lesiontl/dataset.hpp"
#include "lesiontl/image.hpp"
#include "lesiontl/model.hpp"
#include "lesiontl/rng.hpp"
#include "lesiontl/training.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("lesiontl-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  fs::path path_;
};

/// Uniform colour plus +-`noise` per channel; every image differs from every
/// other because the noise stream is seeded per file.
inline lesiontl::Image noisy_image(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b, int noise,
                                   std::uint64_t seed) {
  lesiontl::Rng rng(seed);
  auto img = lesiontl::make_image(w, h);
  const std::uint8_t base[3] = {r, g, b};
  for (std::size_t i = 0; i < img.rgb.size(); ++i) {
    const int v = base[i % 3] + static_cast<int>(rng.below(2 * noise + 1)) - noise;
    img.rgb[i] = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
  }
  return img;
}

/// <root>/melanoma (red-ish) and <root>/benign (blue-ish) PNGs.
inline void write_two_class_corpus(const fs::path& root, int melanoma, int benign, std::uint64_t seed, int side = 16,
                                   int noise = 20) {
  fs::create_directories(root / "melanoma");
  fs::create_directories(root / "benign");
  for (int i = 0; i < melanoma; ++i) {
    lesiontl::write_png(root / "melanoma" / ("ISIC_" + std::to_string(1000 + i) + ".png"),
                        noisy_image(side, side, 200, 40, 40, noise, seed * 7919 + static_cast<std::uint64_t>(i)));
  }
  for (int i = 0; i < benign; ++i) {
    lesiontl::write_png(root / "benign" / ("nevus_" + std::to_string(1000 + i) + ".png"),
                        noisy_image(side, side, 40, 40, 200, noise, seed * 7919 + 100000 + static_cast<std::uint64_t>(i)));
  }
}

/// The small variant used for gradient and freeze checks: 8x8 input, one
/// 2-filter convolution, a 4-unit hidden layer.
inline lesiontl::model::ModelSpec tiny_spec(int input_size = 8) {
  lesiontl::model::ModelSpec spec;
  spec.backbone_id = lesiontl::BackboneId::tiny;
  spec.pretrained = false;
  spec.dropout_rate = 0.0;
  spec.head_widths = {4};
  spec.freeze.freeze_first_n = 0;
  spec.input_size = input_size;
  return spec;
}

inline std::vector<float> random_values(std::size_t n, lesiontl::Rng& rng, double scale = 1.0) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal() * scale);
  return v;
}

/// Balanced in-memory set of random inputs.
inline lesiontl::training::InMemorySource random_source(lesiontl::nn::FeatureShape shape, std::size_t n,
                                                        std::uint64_t seed, const std::string& prefix) {
  lesiontl::Rng rng(seed);
  lesiontl::training::InMemorySource src(shape);
  for (std::size_t i = 0; i < n; ++i) {
    src.add(prefix + std::to_string(i), static_cast<int>(i % 2), random_values(shape.size(), rng));
  }
  return src;
}

}  // namespace testing
