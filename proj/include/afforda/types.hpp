#pragma once

// Value types shared across the toolkit. Everything here is immutable after
// construction (or trivially copyable) and safe to share between threads.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace afforda {

struct Point2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

using PointSet2D = std::vector<Point2>;

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  double norm() const;
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 normalized() const;

  friend Vec3 operator+(const Vec3& a, const Vec3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(const Vec3& a, const Vec3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, const Vec3& v) { return {s * v.x, s * v.y, s * v.z}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
};

// Continuous motion direction in the camera frame: x right, y down, z forward.
using DirectionVector = Vec3;

struct ImageRef {
  std::string path;
  int width = 0;
  int height = 0;

  // Throws InvalidArgument when the path is empty or a dimension is < 1.
  void validate() const;
  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

struct Instruction {
  std::string verb;
  std::string noun;
  std::string raw;

  // Canonical "<verb> the <noun>" rendering.
  std::string render() const;
  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct BBox {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  bool valid() const { return x0 < x1 && y0 < y1; }
  bool contains(const Point2& p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  bool within(int width, int height) const {
    return x0 >= 0.0 && y0 >= 0.0 && x1 <= width && y1 <= height;
  }
  friend bool operator==(const BBox&, const BBox&) = default;
};

// Row-major boolean raster.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height);
  BinaryMask(int width, int height, std::vector<std::uint8_t> bits);

  int width() const { return width_; }
  int height() const { return height_; }
  bool empty() const { return popcount() == 0; }
  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < width_ && y < height_; }
  bool at(int x, int y) const { return bits_[index(x, y)] != 0; }
  // Out-of-bounds coordinates read as unset.
  bool get(int x, int y) const { return in_bounds(x, y) && at(x, y); }
  // Nearest-integer pixel containment for sub-pixel points.
  bool contains(const Point2& p) const;
  void set(int x, int y, bool v = true) { bits_[index(x, y)] = v ? 1 : 0; }
  std::size_t popcount() const;
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  static BinaryMask from_box(int width, int height, const BBox& box);
  // Tight pixel bounding box, nullopt when empty.
  std::optional<BBox> bounding_box() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Non-negative heatmap. `normalized()` maps sum to 1 within 1e-9.
class AffordanceMap {
 public:
  AffordanceMap() = default;
  AffordanceMap(int width, int height);
  AffordanceMap(int width, int height, std::vector<double> values, bool normalized = false);

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }
  bool is_normalized() const { return normalized_; }
  double at(int x, int y) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  const std::vector<double>& values() const { return values_; }
  double sum() const;
  double max() const;
  // Pixel of the maximum value; ties resolved by first in row-major order.
  std::array<int, 2> argmax() const;

  // Throws ZeroMass when the total is not positive.
  AffordanceMap normalized() const;

  friend bool operator==(const AffordanceMap&, const AffordanceMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
  bool normalized_ = false;
};

// Element of the 26-direction codebook. Components are over the codebook
// axes (axis0 forward/backward, axis1 downward/upward, axis2 leftward/rightward).
struct DiscreteDirection {
  std::int8_t a0 = 0;
  std::int8_t a1 = 0;
  std::int8_t a2 = 0;

  // Throws InvalidArgument for components outside {-1,0,1} or the zero vector.
  static DiscreteDirection make(int a0, int a1, int a2);
  Vec3 vector() const { return {double(a0), double(a1), double(a2)}; }
  Vec3 unit() const { return vector().normalized(); }

  // The 26 members in lexicographic order of (a0, a1, a2).
  static const std::array<DiscreteDirection, 26>& all();

  friend auto operator<=>(const DiscreteDirection&, const DiscreteDirection&) = default;
};

// Signed permutation taking camera coordinates to codebook axes. The default
// maps (axis0, axis1, axis2) = (z, y, -x).
struct AxisMapping {
  std::array<std::array<int, 3>, 3> rows{{{0, 0, 1}, {0, 1, 0}, {-1, 0, 0}}};

  static AxisMapping camera_default() { return {}; }
  static AxisMapping identity() { return {{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}}; }

  Vec3 to_codebook(const Vec3& camera) const;
  Vec3 to_camera(const Vec3& codebook) const;
  // Throws InvalidArgument unless rows form a signed permutation.
  void validate() const;
};

struct Trajectory3D {
  int pixel_id = 0;
  std::vector<Vec3> points;

  friend bool operator==(const Trajectory3D&, const Trajectory3D&) = default;
};

enum class SampleSource { real_world, laboratory };

struct Sample {
  std::string id;
  ImageRef image;
  Instruction instruction;
  std::optional<AffordanceMap> gt_map;
  std::optional<DiscreteDirection> gt_direction;
  SampleSource source = SampleSource::real_world;
};

struct Correspondence {
  Point2 src;  // frame t
  Point2 dst;  // frame t-1
};

struct Detection {
  std::optional<double> confidence;
  bool contact = false;
};

struct InteractionClip {
  std::vector<ImageRef> frames;
  int contact_index = 0;
  int pre_contact_count = 0;
  std::vector<std::optional<BinaryMask>> hand_masks;
  std::vector<std::optional<BinaryMask>> object_masks;
  std::vector<std::optional<BBox>> hand_boxes;
  std::vector<std::optional<BBox>> object_boxes;
  std::vector<Detection> detections;
  // Entry i relates frame i to frame i-1; entry 0 is unused.
  std::vector<std::vector<Correspondence>> correspondences;
  std::vector<std::optional<Eigen::Matrix3d>> homographies;

  // Checks the per-frame vectors against the frame count (empty vectors are
  // allowed and mean "not provided") and the contact-index invariant.
  void validate() const;
};

}  // namespace afforda
