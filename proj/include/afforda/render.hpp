#pragma once

#include <vector>

#include "afforda/image.hpp"
#include "afforda/types.hpp"

namespace afforda {

struct LabelBox {
  int number = 0;
  // Anchor pixel (inside the labelled mask) and the drawn box, inclusive.
  int anchor_x = 0;
  int anchor_y = 0;
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
};

struct Overlay {
  RgbImage image;
  std::vector<LabelBox> labels;
};

constexpr double kOverlayAlpha = 0.45;
constexpr int kOutlineWidth = 2;

// Fixed 20-colour palette, cycled for more than 20 regions.
const std::vector<Rgb>& overlay_palette();

// Mask pixel closest to the mask centroid (the centroid itself when it lies
// inside). Ties resolve to the first pixel in row-major order.
std::array<int, 2> label_anchor(const BinaryMask& mask);

// Draws `number` as white digits on a black box centred on (cx, cy), shifted
// to stay inside the image.
LabelBox draw_label(RgbImage& img, int number, int cx, int cy);

// Semi-transparent fill, 2 px outline and the numeral 1.
Overlay render_region_overlay(const RgbImage& image, const BinaryMask& mask);

// Colour-coded candidates labelled 1..K. Labels are drawn after every fill
// so later regions never paint over them.
Overlay render_som_overlay(const RgbImage& image, const std::vector<BinaryMask>& partitions);

// r x c tiling into K disjoint masks covering the image, row-major. The
// factorization with the squarest tiles is chosen.
std::vector<BinaryMask> grid_partition(int width, int height, int k);

}  // namespace afforda
