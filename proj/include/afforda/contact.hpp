#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "afforda/geometry.hpp"
#include "afforda/types.hpp"

namespace afforda {

// Mask pixels with at least one 8-neighbour outside the mask (pixels beyond
// the raster count as outside). Row-major order.
PointSet2D mask_boundary(const BinaryMask& mask);

// Boundary pixels of the hand mask inside the object box, subsampled to at
// most `count` points without replacement.
PointSet2D sample_contact_points(const BinaryMask& hand, const BBox& object_box, int count,
                                 std::uint64_t seed);

struct BackprojectionResult {
  int stop_index = 0;
  std::map<int, PointSet2D> per_frame_points;
  PointSet2D valid_points;
  std::size_t sampled = 0;
  // Points lost by leaving the frame, over all steps.
  std::size_t out_of_bounds = 0;
  // Points removed by the object-mask validity filter at the stop frame.
  std::size_t dropped = 0;
};

// Frame whose nearest-pixel rounding of p lies inside [0,w) x [0,h).
bool in_frame(const Point2& p, int width, int height);

// Walks from the contact frame back to the latest frame without detected
// contact. homographies[i] maps frame i coordinates into frame i-1.
// valid_points is left equal to the points reaching the stop frame;
// annotate_contact applies the mask filter afterwards.
BackprojectionResult backproject_contact(const PointSet2D& points, const InteractionClip& clip,
                                         std::span<const Homography> homographies,
                                         std::span<const bool> contact_flags);

PointSet2D filter_points_by_mask(const PointSet2D& points, const BinaryMask& object_mask);

// Normalized 1-D Gaussian taps for offsets -radius..radius, radius = ceil(3 sigma).
std::vector<double> gaussian_kernel(double sigma);

AffordanceMap rasterize_affordance_map(const PointSet2D& points, int width, int height,
                                       double sigma);

struct ContactConfig {
  int count = 32;
  double sigma = 10.0;
  std::uint64_t seed = 0;
  RansacOptions ransac{};
};

struct ContactAnnotation {
  AffordanceMap map;
  BackprojectionResult provenance;
  PointSet2D contact_points;
  // Frame the map is expressed in (the stop frame).
  int frame_index = 0;
};

// Full contact-region pipeline over one clip. Errors carry the failing stage
// ("sample", "homography/frame i", "backproject", "filter", "rasterize").
ContactAnnotation annotate_contact(const InteractionClip& clip, const ContactConfig& cfg = {});

}  // namespace afforda
