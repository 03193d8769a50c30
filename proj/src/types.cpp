#include "afforda/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "afforda/error.hpp"

namespace afforda {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  if (!(n > 0.0)) throw Error(Errc::ZeroVector, "cannot normalize a zero vector");
  return {x / n, y / n, z / n};
}

void ImageRef::validate() const {
  if (path.empty()) throw Error(Errc::InvalidArgument, "image path is empty");
  if (width < 1 || height < 1) {
    throw Error(Errc::InvalidArgument, "image dimensions must be positive: " + path);
  }
}

std::string Instruction::render() const { return verb + " the " + noun; }

BinaryMask::BinaryMask(int width, int height)
    : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(Errc::InvalidArgument, "negative mask dimensions");
  bits_.assign(static_cast<std::size_t>(width) * height, 0);
}

BinaryMask::BinaryMask(int width, int height, std::vector<std::uint8_t> bits)
    : width_(width), height_(height), bits_(std::move(bits)) {
  if (width < 0 || height < 0) throw Error(Errc::InvalidArgument, "negative mask dimensions");
  if (bits_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(Errc::InvalidArgument, "mask bit count does not match dimensions");
  }
  for (auto& b : bits_) b = b ? 1 : 0;
}

bool BinaryMask::contains(const Point2& p) const {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  const double rx = std::floor(p.x + 0.5);
  const double ry = std::floor(p.y + 0.5);
  if (rx < 0 || ry < 0 || rx >= width_ || ry >= height_) return false;
  return at(static_cast<int>(rx), static_cast<int>(ry));
}

std::size_t BinaryMask::popcount() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

BinaryMask BinaryMask::from_box(int width, int height, const BBox& box) {
  BinaryMask m(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (box.contains({double(x), double(y)})) m.set(x, y);
    }
  }
  return m;
}

std::optional<BBox> BinaryMask::bounding_box() const {
  int x0 = width_, y0 = height_, x1 = -1, y1 = -1;
  for (int y = 0; y < height_; ++y) {
    for (int x = 0; x < width_; ++x) {
      if (!at(x, y)) continue;
      x0 = std::min(x0, x);
      y0 = std::min(y0, y);
      x1 = std::max(x1, x);
      y1 = std::max(y1, y);
    }
  }
  if (x1 < 0) return std::nullopt;
  // Pixel centers are inclusive; widen degenerate boxes so x0 < x1 holds.
  return BBox{double(x0), double(y0), double(x1 == x0 ? x1 + 1 : x1),
              double(y1 == y0 ? y1 + 1 : y1)};
}

AffordanceMap::AffordanceMap(int width, int height)
    : width_(width), height_(height) {
  if (width < 0 || height < 0) throw Error(Errc::InvalidArgument, "negative map dimensions");
  values_.assign(static_cast<std::size_t>(width) * height, 0.0);
}

AffordanceMap::AffordanceMap(int width, int height, std::vector<double> values, bool normalized)
    : width_(width), height_(height), values_(std::move(values)), normalized_(normalized) {
  if (width < 0 || height < 0) throw Error(Errc::InvalidArgument, "negative map dimensions");
  if (values_.size() != static_cast<std::size_t>(width) * height) {
    throw Error(Errc::InvalidArgument, "map value count does not match dimensions");
  }
  for (double v : values_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(Errc::InvalidArgument, "affordance map values must be finite and non-negative");
    }
  }
  if (normalized_ && std::abs(sum() - 1.0) > 1e-9) {
    throw Error(Errc::NotNormalized, "map flagged normalized does not sum to 1");
  }
}

double AffordanceMap::sum() const {
  // Neumaier summation keeps the normalization check tight on large rasters.
  double s = 0.0, c = 0.0;
  for (double v : values_) {
    const double t = s + v;
    c += std::abs(s) >= std::abs(v) ? (s - t) + v : (v - t) + s;
    s = t;
  }
  return s + c;
}

double AffordanceMap::max() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, v);
  return m;
}

std::array<int, 2> AffordanceMap::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values_.size(); ++i) {
    if (values_[i] > values_[best]) best = i;
  }
  if (width_ == 0) return {0, 0};
  return {static_cast<int>(best % width_), static_cast<int>(best / width_)};
}

AffordanceMap AffordanceMap::normalized() const {
  const double total = sum();
  if (!(total > 0.0)) throw Error(Errc::ZeroMass, "map has no mass to normalize");
  std::vector<double> out(values_.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = values_[i] / total;
  // One correction pass absorbs the rounding residue into the largest cell.
  AffordanceMap tmp(width_, height_, out, false);
  const double residue = 1.0 - tmp.sum();
  if (residue != 0.0 && !out.empty()) {
    auto it = std::max_element(out.begin(), out.end());
    *it = std::max(0.0, *it + residue);
  }
  return AffordanceMap(width_, height_, std::move(out), true);
}

DiscreteDirection DiscreteDirection::make(int a0, int a1, int a2) {
  auto ok = [](int v) { return v >= -1 && v <= 1; };
  if (!ok(a0) || !ok(a1) || !ok(a2)) {
    throw Error(Errc::InvalidArgument, "direction components must be in {-1,0,1}");
  }
  if (a0 == 0 && a1 == 0 && a2 == 0) {
    throw Error(Errc::InvalidArgument, "the zero vector is not a codebook direction");
  }
  return {static_cast<std::int8_t>(a0), static_cast<std::int8_t>(a1), static_cast<std::int8_t>(a2)};
}

const std::array<DiscreteDirection, 26>& DiscreteDirection::all() {
  static const std::array<DiscreteDirection, 26> table = [] {
    std::array<DiscreteDirection, 26> t{};
    std::size_t i = 0;
    for (int a = -1; a <= 1; ++a)
      for (int b = -1; b <= 1; ++b)
        for (int c = -1; c <= 1; ++c)
          if (a != 0 || b != 0 || c != 0) t[i++] = make(a, b, c);
    return t;
  }();
  return table;
}

Vec3 AxisMapping::to_codebook(const Vec3& v) const {
  const double in[3] = {v.x, v.y, v.z};
  double out[3] = {0, 0, 0};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out[r] += rows[r][c] * in[c];
  return {out[0], out[1], out[2]};
}

Vec3 AxisMapping::to_camera(const Vec3& v) const {
  // Signed permutations are orthogonal: the inverse is the transpose.
  const double in[3] = {v.x, v.y, v.z};
  double out[3] = {0, 0, 0};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out[c] += rows[r][c] * in[r];
  return {out[0], out[1], out[2]};
}

void AxisMapping::validate() const {
  std::array<int, 3> col_hits{0, 0, 0};
  for (const auto& row : rows) {
    int nonzero = 0;
    for (int c = 0; c < 3; ++c) {
      if (row[c] == 0) continue;
      if (row[c] != 1 && row[c] != -1) throw Error(Errc::InvalidArgument, "axis mapping entries must be -1, 0 or 1");
      ++nonzero;
      ++col_hits[c];
    }
    if (nonzero != 1) throw Error(Errc::InvalidArgument, "axis mapping row must select one camera axis");
  }
  for (int h : col_hits) {
    if (h != 1) throw Error(Errc::InvalidArgument, "axis mapping must be a permutation");
  }
}

void InteractionClip::validate() const {
  const std::size_t n = frames.size();
  if (n == 0) throw Error(Errc::InvalidArgument, "clip has no frames");
  for (const auto& f : frames) f.validate();
  if (contact_index != pre_contact_count) {
    throw Error(Errc::InvalidArgument, "contact_index must equal pre_contact_count");
  }
  if (contact_index < 0 || static_cast<std::size_t>(contact_index) >= n) {
    throw Error(Errc::InvalidArgument, "contact_index out of range");
  }
  auto check_len = [n](std::size_t len, const char* what) {
    if (len != 0 && len != n) {
      throw Error(Errc::MisalignedInputs, std::string(what) + " length does not match frame count");
    }
  };
  check_len(hand_masks.size(), "hand_masks");
  check_len(object_masks.size(), "object_masks");
  check_len(hand_boxes.size(), "hand_boxes");
  check_len(object_boxes.size(), "object_boxes");
  check_len(detections.size(), "detections");
  check_len(correspondences.size(), "correspondences");
  check_len(homographies.size(), "homographies");
  auto check_masks = [&](const std::vector<std::optional<BinaryMask>>& masks, const char* what) {
    for (std::size_t i = 0; i < masks.size(); ++i) {
      if (!masks[i]) continue;
      if (masks[i]->width() != frames[i].width || masks[i]->height() != frames[i].height) {
        throw Error(Errc::ShapeMismatch,
                    std::string(what) + " at frame " + std::to_string(i) + " does not match frame size");
      }
    }
  };
  check_masks(hand_masks, "hand mask");
  check_masks(object_masks, "object mask");
}

}  // namespace afforda
