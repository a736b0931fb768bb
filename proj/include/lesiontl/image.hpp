#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lesiontl {

/// 8-bit interleaved RGB raster.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t* pixel(int x, int y) { return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3; }
  const std::uint8_t* pixel(int x, int y) const {
    return rgb.data() + (static_cast<std::size_t>(y) * width + x) * 3;
  }
};

Image make_image(int width, int height, std::uint8_t r = 0, std::uint8_t g = 0, std::uint8_t b = 0);

/// Decodes PNG or JPEG (detected from magic bytes). Grayscale is promoted to
/// RGB, alpha is dropped, 16-bit samples are reduced to 8. Throws
/// Error(ErrorCode::decode).
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image& image);
void write_jpeg(const std::filesystem::path& path, const Image& image, int quality = 95);

/// Bilinear resize with half-pixel centres (no aspect padding). Returns planar
/// channel-major floats in [0, 255], layout [3][out_h][out_w].
std::vector<float> resize_bilinear_planar(const Image& image, int out_height, int out_width);

}  // namespace lesiontl
