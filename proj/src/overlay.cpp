#include <algorithm>
#include <array>
#include <cmath>

#include "attnsel/pipeline.h"

namespace attnsel {

namespace {

constexpr double kHeatAlpha = 0.5;
constexpr std::array<std::uint8_t, 3> kBoxColor{0, 255, 0};

// Jet-style ramp on [0, 1].
std::array<double, 3> palette(double t) {
  auto ch = [](double v) { return std::clamp(1.5 - std::abs(v), 0.0, 1.0); };
  return {ch(4.0 * t - 3.0), ch(4.0 * t - 2.0), ch(4.0 * t - 1.0)};
}

double bilinear(std::span<const float> grid, std::int64_t rows, std::int64_t cols, double y, double x) {
  y = std::clamp(y, 0.0, static_cast<double>(rows - 1));
  x = std::clamp(x, 0.0, static_cast<double>(cols - 1));
  const auto y0 = static_cast<std::int64_t>(std::floor(y));
  const auto x0 = static_cast<std::int64_t>(std::floor(x));
  const auto y1 = std::min(y0 + 1, rows - 1);
  const auto x1 = std::min(x0 + 1, cols - 1);
  const double fy = y - y0;
  const double fx = x - x0;
  auto at = [&](std::int64_t r, std::int64_t c) { return static_cast<double>(grid[static_cast<std::size_t>(r * cols + c)]); };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
}

}  // namespace

ImageTensor render_overlay(const ImageTensor& image, const AttentionGrid& attention, std::span<const CropBox> boxes) {
  const auto g = attention.grid();
  const auto values = attention.values().f32();
  const float peak = *std::max_element(values.begin(), values.end());
  const double scale = peak > 0.0f ? 1.0 / peak : 0.0;
  const auto w = image.width();
  const auto h = image.height();

  auto out = image;
  auto& px = out.pixels();
  for (std::int64_t y = 0; y < h; ++y) {
    const double gy = (y + 0.5) * static_cast<double>(g.rows) / static_cast<double>(h) - 0.5;
    for (std::int64_t x = 0; x < w; ++x) {
      const double gx = (x + 0.5) * static_cast<double>(g.cols) / static_cast<double>(w) - 0.5;
      const auto color = palette(bilinear(values, g.rows, g.cols, gy, gx) * scale);
      auto* p = px.data() + (y * w + x) * 3;
      for (int c = 0; c < 3; ++c) {
        p[c] = static_cast<std::uint8_t>(std::lround((1.0 - kHeatAlpha) * p[c] + kHeatAlpha * 255.0 * color[c]));
      }
    }
  }

  auto paint = [&](std::int64_t x, std::int64_t y) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    std::copy(kBoxColor.begin(), kBoxColor.end(), px.begin() + (y * w + x) * 3);
  };
  for (const auto& b : boxes) {
    for (std::int64_t x = b.x0; x < b.x0 + b.width; ++x) {
      paint(x, b.y0);
      paint(x, b.y0 + b.height - 1);
    }
    for (std::int64_t y = b.y0; y < b.y0 + b.height; ++y) {
      paint(b.x0, y);
      paint(b.x0 + b.width - 1, y);
    }
  }
  return out;
}

}  // namespace attnsel
