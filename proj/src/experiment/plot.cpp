#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>

#include "lesiontl/csv.hpp"
#include "lesiontl/errors.hpp"
#include "lesiontl/experiment.hpp"
#include "lesiontl/image.hpp"

namespace lesiontl::experiment {
namespace {

using Rgb = std::array<std::uint8_t, 3>;

constexpr int kWidth = 800;
constexpr int kHeight = 600;
constexpr int kMargin = 40;
constexpr int kGap = 30;

const std::array<Rgb, 6> kPalette = {{{34, 139, 34}, {200, 30, 30}, {30, 80, 200},
                                      {230, 140, 0}, {130, 50, 160}, {0, 150, 150}}};

struct Panel {
  int left, top, right, bottom;
  double x_min, x_max, y_min, y_max;

  int px(double x) const {
    return left + static_cast<int>(std::lround((x - x_min) / (x_max - x_min) * (right - left)));
  }
  int py(double y) const {
    const double t = (y - y_min) / (y_max - y_min);
    return bottom - static_cast<int>(std::lround(std::clamp(t, 0.0, 1.0) * (bottom - top)));
  }
};

void put(Image& img, int x, int y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
  auto* p = img.pixel(x, y);
  p[0] = c[0];
  p[1] = c[1];
  p[2] = c[2];
}

void block(Image& img, int cx, int cy, int half, const Rgb& c) {
  for (int dy = -half; dy <= half; ++dy) {
    for (int dx = -half; dx <= half; ++dx) put(img, cx + dx, cy + dy, c);
  }
}

// Bresenham, drawn two pixels thick.
void line(Image& img, int x0, int y0, int x1, int y1, const Rgb& c) {
  const int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
  const int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  for (;;) {
    put(img, x0, y0, c);
    put(img, x0 + 1, y0, c);
    put(img, x0, y0 + 1, c);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void frame(Image& img, const Panel& p) {
  const Rgb grid{225, 225, 225};
  for (int i = 1; i < 5; ++i) {
    const int y = p.top + (p.bottom - p.top) * i / 5;
    for (int x = p.left; x <= p.right; ++x) put(img, x, y, grid);
  }
  const Rgb axis{60, 60, 60};
  for (int x = p.left; x <= p.right; ++x) {
    put(img, x, p.top, axis);
    put(img, x, p.bottom, axis);
  }
  for (int y = p.top; y <= p.bottom; ++y) {
    put(img, p.left, y, axis);
    put(img, p.right, y, axis);
  }
}

void series(Image& img, const Panel& p, const std::vector<training::EpochRecord>& h, bool accuracy, const Rgb& c) {
  const auto value = [&](const training::EpochRecord& r) { return accuracy ? r.val_accuracy : r.val_loss; };
  for (std::size_t i = 0; i < h.size(); ++i) {
    const int x = p.px(h[i].epoch), y = p.py(value(h[i]));
    block(img, x, y, 2, c);
    if (i > 0) line(img, p.px(h[i - 1].epoch), p.py(value(h[i - 1])), x, y, c);
  }
}

}  // namespace

PlotArtifacts plot_learning_curves(std::span<const LabeledHistory> histories, const std::filesystem::path& image) {
  if (histories.empty()) throw Error(ErrorCode::plot, "no histories to plot");
  int max_epoch = 1;
  double max_loss = 0.0;
  for (const auto& h : histories) {
    if (h.history.empty()) throw Error(ErrorCode::plot, "history '" + h.label + "' is empty");
    for (const auto& r : h.history) {
      max_epoch = std::max(max_epoch, r.epoch);
      if (std::isfinite(r.val_loss)) max_loss = std::max(max_loss, r.val_loss);
    }
  }
  const double x_min = max_epoch == 1 ? 0.5 : 1.0;
  const double x_max = max_epoch == 1 ? 1.5 : max_epoch;
  const int mid = kHeight / 2;
  const Panel acc{kMargin, kMargin, kWidth - kMargin, mid - kGap / 2, x_min, x_max, 0.0, 1.0};
  const Panel loss{kMargin, mid + kGap / 2, kWidth - kMargin, kHeight - kMargin,
                   x_min, x_max, 0.0, max_loss > 0.0 ? max_loss * 1.05 : 1.0};

  Image img = make_image(kWidth, kHeight, 255, 255, 255);
  frame(img, acc);
  frame(img, loss);
  std::vector<csv::Row> rows;
  for (std::size_t s = 0; s < histories.size(); ++s) {
    const auto& colour = kPalette[s % kPalette.size()];
    series(img, acc, histories[s].history, true, colour);
    series(img, loss, histories[s].history, false, colour);
    // Legend swatch, one per series, stacked in the top right corner.
    block(img, kWidth - kMargin - 12, kMargin + 12 + static_cast<int>(s) * 16, 5, colour);
    for (const auto& r : histories[s].history) {
      rows.push_back({histories[s].label, std::to_string(r.epoch), csv::format_real(r.val_accuracy),
                      csv::format_real(r.val_loss)});
    }
  }
  if (image.has_parent_path()) std::filesystem::create_directories(image.parent_path());
  write_png(image, img);
  PlotArtifacts out{image, image};
  out.sidecar.replace_extension(".csv");
  csv::write(out.sidecar, {"series", "epoch", "val_accuracy", "val_loss"}, rows);
  return out;
}

}  // namespace lesiontl::experiment
