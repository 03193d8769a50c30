#include "afforda/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "afforda/error.hpp"

namespace afforda {

namespace {

// 5x7 digit glyphs, one byte per row, bit 4 = leftmost column.
constexpr std::uint8_t kDigits[10][7] = {
    {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},  // 0
    {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},  // 1
    {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},  // 2
    {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},  // 3
    {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},  // 4
    {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},  // 5
    {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},  // 6
    {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},  // 7
    {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},  // 8
    {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},  // 9
};

constexpr int kGlyphScale = 2;
constexpr int kGlyphW = 5 * kGlyphScale;
constexpr int kGlyphH = 7 * kGlyphScale;
constexpr int kGlyphGap = 2;
constexpr int kPad = 2;
constexpr Rgb kLabelInk{255, 255, 255};
constexpr Rgb kLabelBack{0, 0, 0};

bool near_outside(const BinaryMask& m, int x, int y, int width) {
  for (int dy = -width; dy <= width; ++dy)
    for (int dx = -width; dx <= width; ++dx)
      if (!m.get(x + dx, y + dy)) return true;
  return false;
}

void paint_region(RgbImage& img, const BinaryMask& mask, Rgb color) {
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      if (near_outside(mask, x, y, kOutlineWidth)) {
        img.set(x, y, color);
      } else {
        img.blend(x, y, color, kOverlayAlpha);
      }
    }
  }
}

void require_same_size(const RgbImage& image, const BinaryMask& mask) {
  if (mask.width() != image.width() || mask.height() != image.height()) {
    throw Error(Errc::ShapeMismatch, "mask does not match image size");
  }
}

}  // namespace

const std::vector<Rgb>& overlay_palette() {
  static const std::vector<Rgb> palette = {
      {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},   {245, 130, 48},
      {145, 30, 180}, {70, 240, 240},  {240, 50, 230}, {210, 245, 60},  {250, 190, 212},
      {0, 128, 128},  {220, 190, 255}, {170, 110, 40}, {255, 250, 200}, {128, 0, 0},
      {170, 255, 195}, {128, 128, 0},  {255, 215, 180}, {0, 0, 128},    {128, 128, 128},
  };
  return palette;
}

std::array<int, 2> label_anchor(const BinaryMask& mask) {
  double cx = 0.0, cy = 0.0;
  std::size_t n = 0;
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x)
      if (mask.at(x, y)) {
        cx += x;
        cy += y;
        ++n;
      }
  if (n == 0) throw Error(Errc::EmptyMask, "cannot place a label on an empty mask");
  cx /= double(n);
  cy /= double(n);
  const int rx = static_cast<int>(std::lround(cx));
  const int ry = static_cast<int>(std::lround(cy));
  if (mask.get(rx, ry)) return {rx, ry};
  std::array<int, 2> best{0, 0};
  double best_d = std::numeric_limits<double>::infinity();
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      const double d = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      if (d < best_d) {
        best_d = d;
        best = {x, y};
      }
    }
  return best;
}

LabelBox draw_label(RgbImage& img, int number, int cx, int cy) {
  const std::string digits = std::to_string(number);
  const int n = static_cast<int>(digits.size());
  const int w = n * kGlyphW + (n - 1) * kGlyphGap + 2 * kPad;
  const int h = kGlyphH + 2 * kPad;
  int x0 = cx - w / 2;
  int y0 = cy - h / 2;
  x0 = std::clamp(x0, 0, std::max(0, img.width() - w));
  y0 = std::clamp(y0, 0, std::max(0, img.height() - h));
  for (int y = y0; y < y0 + h; ++y)
    for (int x = x0; x < x0 + w; ++x) img.set(x, y, kLabelBack);
  for (int i = 0; i < n; ++i) {
    const auto& glyph = kDigits[digits[i] - '0'];
    const int gx = x0 + kPad + i * (kGlyphW + kGlyphGap);
    const int gy = y0 + kPad;
    for (int r = 0; r < 7; ++r)
      for (int c = 0; c < 5; ++c) {
        if (!(glyph[r] & (0x10 >> c))) continue;
        for (int sy = 0; sy < kGlyphScale; ++sy)
          for (int sx = 0; sx < kGlyphScale; ++sx)
            img.set(gx + c * kGlyphScale + sx, gy + r * kGlyphScale + sy, kLabelInk);
      }
  }
  return {number, cx, cy, x0, y0, x0 + w - 1, y0 + h - 1};
}

Overlay render_region_overlay(const RgbImage& image, const BinaryMask& mask) {
  require_same_size(image, mask);
  if (mask.empty()) throw Error(Errc::EmptyMask, "region mask is empty");
  Overlay out{image, {}};
  paint_region(out.image, mask, overlay_palette()[0]);
  const auto anchor = label_anchor(mask);
  out.labels.push_back(draw_label(out.image, 1, anchor[0], anchor[1]));
  return out;
}

Overlay render_som_overlay(const RgbImage& image, const std::vector<BinaryMask>& partitions) {
  std::vector<int> owner(static_cast<std::size_t>(image.width()) * image.height(), -1);
  for (std::size_t k = 0; k < partitions.size(); ++k) {
    const auto& m = partitions[k];
    require_same_size(image, m);
    for (int y = 0; y < m.height(); ++y)
      for (int x = 0; x < m.width(); ++x) {
        if (!m.at(x, y)) continue;
        int& o = owner[static_cast<std::size_t>(y) * image.width() + x];
        if (o >= 0) {
          throw Error(Errc::OverlappingPartitions, "candidates " + std::to_string(o + 1) + " and " +
                                                       std::to_string(k + 1) + " overlap");
        }
        o = static_cast<int>(k);
      }
  }
  Overlay out{image, {}};
  const auto& palette = overlay_palette();
  for (std::size_t k = 0; k < partitions.size(); ++k) {
    if (partitions[k].empty()) continue;
    paint_region(out.image, partitions[k], palette[k % palette.size()]);
  }
  for (std::size_t k = 0; k < partitions.size(); ++k) {
    if (partitions[k].empty()) continue;
    const auto anchor = label_anchor(partitions[k]);
    out.labels.push_back(draw_label(out.image, static_cast<int>(k + 1), anchor[0], anchor[1]));
  }
  return out;
}

std::vector<BinaryMask> grid_partition(int width, int height, int k) {
  if (k < 1 || width < 1 || height < 1) throw Error(Errc::BadK, "K must be >= 1");
  int best_r = 0, best_c = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (int r = 1; r <= k; ++r) {
    if (k % r != 0) continue;
    const int c = k / r;
    if (c > width || r > height) continue;
    const double score = std::abs(std::log((double(width) / c) / (double(height) / r)));
    const bool better = score < best_score - 1e-12 ||
                        (std::abs(score - best_score) <= 1e-12 && (width >= height ? c > best_c : r > best_r));
    if (better) {
      best_score = score;
      best_r = r;
      best_c = c;
    }
  }
  if (best_r == 0) {
    throw Error(Errc::BadK, "K=" + std::to_string(k) + " cannot tile a " + std::to_string(width) +
                                "x" + std::to_string(height) + " image");
  }
  std::vector<BinaryMask> tiles;
  tiles.reserve(k);
  for (int r = 0; r < best_r; ++r) {
    const int y0 = r * height / best_r, y1 = (r + 1) * height / best_r;
    for (int c = 0; c < best_c; ++c) {
      const int x0 = c * width / best_c, x1 = (c + 1) * width / best_c;
      BinaryMask m(width, height);
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) m.set(x, y);
      tiles.push_back(std::move(m));
    }
  }
  return tiles;
}

}  // namespace afforda
