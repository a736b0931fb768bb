#include <algorithm>
#include <cmath>

#include "lesiontl/errors.hpp"
#include "lesiontl/image.hpp"

namespace lesiontl {
namespace {

struct Tap {
  int lo;
  int hi;
  float weight;  // contribution of hi
};

std::vector<Tap> taps(int in_size, int out_size) {
  std::vector<Tap> out(static_cast<std::size_t>(out_size));
  const double scale = static_cast<double>(in_size) / out_size;
  for (int i = 0; i < out_size; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in_size - 1);
    out[static_cast<std::size_t>(i)] = {lo, hi, static_cast<float>(src - lo)};
  }
  return out;
}

}  // namespace

std::vector<float> resize_bilinear_planar(const Image& image, int out_height, int out_width) {
  if (image.width <= 0 || image.height <= 0 || out_height <= 0 || out_width <= 0) {
    throw Error(ErrorCode::shape, "resize: dimensions must be positive");
  }
  const auto xs = taps(image.width, out_width);
  const auto ys = taps(image.height, out_height);
  const std::size_t plane = static_cast<std::size_t>(out_height) * out_width;
  std::vector<float> out(plane * 3);
  for (int y = 0; y < out_height; ++y) {
    const Tap ty = ys[static_cast<std::size_t>(y)];
    for (int x = 0; x < out_width; ++x) {
      const Tap tx = xs[static_cast<std::size_t>(x)];
      const std::uint8_t* p00 = image.pixel(tx.lo, ty.lo);
      const std::uint8_t* p01 = image.pixel(tx.hi, ty.lo);
      const std::uint8_t* p10 = image.pixel(tx.lo, ty.hi);
      const std::uint8_t* p11 = image.pixel(tx.hi, ty.hi);
      for (int c = 0; c < 3; ++c) {
        // a + w * (b - a) is exact on flat regions.
        const float top = p00[c] + tx.weight * (static_cast<float>(p01[c]) - p00[c]);
        const float bottom = p10[c] + tx.weight * (static_cast<float>(p11[c]) - p10[c]);
        out[c * plane + static_cast<std::size_t>(y) * out_width + x] = top + ty.weight * (bottom - top);
      }
    }
  }
  return out;
}

}  // namespace lesiontl
