#pragma once

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "afforda/error.hpp"
#include "afforda/types.hpp"

namespace afforda {

// 3x3 projective map. Stored normalized: bottom-right entry 1 when it is
// nonzero, otherwise unit Frobenius norm with the largest-magnitude entry
// positive. Construction rejects singular matrices.
class Homography {
 public:
  Homography() : m_(Eigen::Matrix3d::Identity()) {}
  explicit Homography(const Eigen::Matrix3d& m);

  static Homography identity() { return Homography(); }
  static Homography translation(double dx, double dy);

  const Eigen::Matrix3d& matrix() const { return m_; }

  friend bool operator==(const Homography& a, const Homography& b) { return a.m_ == b.m_; }

 private:
  Eigen::Matrix3d m_;
};

// Direct linear transform with Hartley normalization of both point sets.
// The returned map takes each correspondence's src to its dst.
Homography estimate_homography_dlt(std::span<const Correspondence> corrs);

using ExclusionRegion = std::variant<BinaryMask, BBox>;

struct RansacOptions {
  double inlier_px = 3.0;
  int max_iters = 2000;
  std::uint64_t seed = 0;
  double confidence = 0.999;
};

struct RansacResult {
  Homography h;
  // Aligned with the input correspondences; excluded pairs are never inliers.
  std::vector<bool> inliers;
  std::size_t inlier_count = 0;
  int iterations = 0;
};

bool in_exclusion(const Point2& p, std::span<const ExclusionRegion> regions);

RansacResult estimate_homography_ransac(std::span<const Correspondence> corrs,
                                        std::span<const ExclusionRegion> exclusion,
                                        const RansacOptions& opts = {});

// Projects a single point; throws AtInfinity when |w| <= 1e-12.
Point2 apply(const Homography& h, const Point2& p);
// Throws AtInfinity naming the first offending point index.
PointSet2D apply(const Homography& h, const PointSet2D& pts);

// apply(compose(outer, inner), p) == apply(outer, apply(inner, p))
Homography compose(const Homography& outer, const Homography& inner);
Homography invert(const Homography& h);

double reprojection_error(const Homography& h, const Correspondence& c);

}  // namespace afforda
