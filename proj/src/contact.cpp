#include "afforda/contact.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include "afforda/rng.hpp"

namespace afforda {

PointSet2D mask_boundary(const BinaryMask& mask) {
  PointSet2D out;
  for (int y = 0; y < mask.height(); ++y) {
    for (int x = 0; x < mask.width(); ++x) {
      if (!mask.at(x, y)) continue;
      bool edge = false;
      for (int dy = -1; dy <= 1 && !edge; ++dy)
        for (int dx = -1; dx <= 1 && !edge; ++dx)
          if ((dx || dy) && !mask.get(x + dx, y + dy)) edge = true;
      if (edge) out.push_back({double(x), double(y)});
    }
  }
  return out;
}

PointSet2D sample_contact_points(const BinaryMask& hand, const BBox& object_box, int count,
                                 std::uint64_t seed) {
  if (count < 1) throw Error(Errc::InvalidArgument, "contact point count must be >= 1");
  if (hand.empty()) throw Error(Errc::NoContact, "hand mask is empty");
  PointSet2D candidates;
  for (const auto& p : mask_boundary(hand)) {
    if (object_box.contains(p)) candidates.push_back(p);
  }
  if (candidates.empty()) {
    throw Error(Errc::NoContact, "hand boundary does not intersect the object box");
  }
  // Partial Fisher-Yates: the first k slots end up a uniform k-subset.
  Rng rng(seed);
  const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(count), candidates.size());
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(k);
  return candidates;
}

bool in_frame(const Point2& p, int width, int height) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y)) return false;
  const double rx = std::floor(p.x + 0.5);
  const double ry = std::floor(p.y + 0.5);
  return rx >= 0 && ry >= 0 && rx < width && ry < height;
}

BackprojectionResult backproject_contact(const PointSet2D& points, const InteractionClip& clip,
                                         std::span<const Homography> homographies,
                                         std::span<const bool> contact_flags) {
  const std::size_t n = clip.frames.size();
  if (homographies.size() != n || contact_flags.size() != n) {
    throw Error(Errc::MisalignedInputs, "homographies and contact flags must align with " +
                                            std::to_string(n) + " frames");
  }
  const int ci = clip.contact_index;
  if (ci < 0 || static_cast<std::size_t>(ci) >= n) {
    throw Error(Errc::MisalignedInputs, "contact index outside the clip");
  }
  if (!contact_flags[ci]) {
    throw Error(Errc::MisalignedInputs, "contact frame is not flagged as in contact");
  }

  int stop = 0;
  for (int i = ci - 1; i >= 0; --i) {
    if (!contact_flags[i]) {
      stop = i;
      break;
    }
  }

  BackprojectionResult res;
  res.stop_index = stop;
  res.sampled = points.size();
  PointSet2D current;
  for (const auto& p : points) {
    if (in_frame(p, clip.frames[ci].width, clip.frames[ci].height)) {
      current.push_back(p);
    } else {
      ++res.out_of_bounds;
    }
  }
  res.per_frame_points[ci] = current;
  for (int i = ci; i > stop; --i) {
    PointSet2D next;
    next.reserve(current.size());
    const auto& frame = clip.frames[i - 1];
    for (const auto& p : current) {
      Point2 q;
      try {
        q = apply(homographies[i], p);
      } catch (const Error&) {
        ++res.out_of_bounds;
        continue;
      }
      if (in_frame(q, frame.width, frame.height)) {
        next.push_back(q);
      } else {
        ++res.out_of_bounds;
      }
    }
    current = std::move(next);
    res.per_frame_points[i - 1] = current;
  }
  if (current.empty()) {
    throw Error(Errc::AllPointsLost, "every contact point left the frame before frame " +
                                         std::to_string(stop));
  }
  res.valid_points = current;
  return res;
}

PointSet2D filter_points_by_mask(const PointSet2D& points, const BinaryMask& object_mask) {
  PointSet2D out;
  std::copy_if(points.begin(), points.end(), std::back_inserter(out),
               [&](const Point2& p) { return object_mask.contains(p); });
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw Error(Errc::InvalidArgument, "sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += k[i + radius];
  }
  for (auto& v : k) v /= total;
  return k;
}

AffordanceMap rasterize_affordance_map(const PointSet2D& points, int width, int height,
                                       double sigma) {
  if (width < 1 || height < 1) throw Error(Errc::InvalidArgument, "raster must be at least 1x1");
  const std::vector<double> kernel = gaussian_kernel(sigma);
  const int radius = static_cast<int>(kernel.size() / 2);

  std::vector<double> impulses(static_cast<std::size_t>(width) * height, 0.0);
  std::size_t placed = 0;
  for (const auto& p : points) {
    if (!in_frame(p, width, height)) continue;
    const int x = static_cast<int>(std::floor(p.x + 0.5));
    const int y = static_cast<int>(std::floor(p.y + 0.5));
    impulses[static_cast<std::size_t>(y) * width + x] += 1.0;
    ++placed;
  }
  if (placed == 0) throw Error(Errc::EmptyPoints, "no points fall inside the raster");

  // Separable convolution; mass blurred past the border is discarded.
  std::vector<double> rows(impulses.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    const double* src = &impulses[static_cast<std::size_t>(y) * width];
    double* dst = &rows[static_cast<std::size_t>(y) * width];
    for (int x = 0; x < width; ++x) {
      if (src[x] == 0.0) continue;
      const int lo = std::max(0, x - radius), hi = std::min(width - 1, x + radius);
      for (int t = lo; t <= hi; ++t) dst[t] += src[x] * kernel[t - x + radius];
    }
  }
  std::vector<double> out(impulses.size(), 0.0);
  for (int y = 0; y < height; ++y) {
    const int lo = std::max(0, y - radius), hi = std::min(height - 1, y + radius);
    const double* src = &rows[static_cast<std::size_t>(y) * width];
    for (int t = lo; t <= hi; ++t) {
      const double w = kernel[t - y + radius];
      double* dst = &out[static_cast<std::size_t>(t) * width];
      for (int x = 0; x < width; ++x) dst[x] += w * src[x];
    }
  }
  return AffordanceMap(width, height, std::move(out)).normalized();
}

namespace {

std::vector<ExclusionRegion> frame_exclusions(const InteractionClip& clip, int frame) {
  std::vector<ExclusionRegion> out;
  auto add_mask = [&](const std::vector<std::optional<BinaryMask>>& v) {
    if (static_cast<std::size_t>(frame) < v.size() && v[frame]) out.emplace_back(*v[frame]);
  };
  auto add_box = [&](const std::vector<std::optional<BBox>>& v) {
    if (static_cast<std::size_t>(frame) < v.size() && v[frame]) out.emplace_back(*v[frame]);
  };
  add_mask(clip.hand_masks);
  add_mask(clip.object_masks);
  add_box(clip.hand_boxes);
  add_box(clip.object_boxes);
  return out;
}

template <typename F>
auto staged(const char* stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw e.with_stage(stage);
  }
}

}  // namespace

ContactAnnotation annotate_contact(const InteractionClip& clip, const ContactConfig& cfg) {
  staged("clip", [&] { clip.validate(); return 0; });
  const int ci = clip.contact_index;
  const std::size_t n = clip.frames.size();

  const BinaryMask* hand =
      static_cast<std::size_t>(ci) < clip.hand_masks.size() && clip.hand_masks[ci]
          ? &*clip.hand_masks[ci]
          : nullptr;
  if (!hand) throw Error(Errc::NoContact, "no hand mask at the contact frame", "sample");

  std::optional<BBox> object_box;
  if (static_cast<std::size_t>(ci) < clip.object_boxes.size()) object_box = clip.object_boxes[ci];
  if (!object_box && static_cast<std::size_t>(ci) < clip.object_masks.size() &&
      clip.object_masks[ci]) {
    object_box = clip.object_masks[ci]->bounding_box();
  }
  if (!object_box) throw Error(Errc::NoContact, "no object box at the contact frame", "sample");

  ContactAnnotation out;
  out.contact_points =
      staged("sample", [&] { return sample_contact_points(*hand, *object_box, cfg.count, cfg.seed); });

  if (clip.detections.size() != n) {
    throw Error(Errc::MisalignedInputs, "contact flags missing for some frames", "backproject");
  }
  // std::vector<bool> is not contiguous, so spans need a plain array.
  auto flags = std::make_unique<bool[]>(n);
  for (std::size_t i = 0; i < n; ++i) flags[i] = clip.detections[i].contact;

  int stop = 0;
  for (int i = ci - 1; i >= 0; --i) {
    if (!flags[i]) {
      stop = i;
      break;
    }
  }

  std::vector<Homography> hs(n);
  for (int i = ci; i > stop; --i) {
    const std::string stage = "homography/frame " + std::to_string(i);
    if (static_cast<std::size_t>(i) < clip.homographies.size() && clip.homographies[i]) {
      hs[i] = staged(stage.c_str(), [&] { return Homography(*clip.homographies[i]); });
      continue;
    }
    if (static_cast<std::size_t>(i) >= clip.correspondences.size()) {
      throw Error(Errc::MisalignedInputs, "no homography or correspondences", stage);
    }
    auto regions = frame_exclusions(clip, i);
    auto prev = frame_exclusions(clip, i - 1);
    regions.insert(regions.end(), prev.begin(), prev.end());
    RansacOptions ro = cfg.ransac;
    ro.seed = cfg.ransac.seed + static_cast<std::uint64_t>(i);
    hs[i] = staged(stage.c_str(), [&] {
      return estimate_homography_ransac(clip.correspondences[i], regions, ro).h;
    });
  }

  out.provenance = staged("backproject", [&] {
    return backproject_contact(out.contact_points, clip, hs, std::span<const bool>(flags.get(), n));
  });
  out.frame_index = out.provenance.stop_index;

  const int s = out.provenance.stop_index;
  PointSet2D valid = out.provenance.valid_points;
  if (static_cast<std::size_t>(s) < clip.object_masks.size() && clip.object_masks[s]) {
    valid = filter_points_by_mask(valid, *clip.object_masks[s]);
  } else if (static_cast<std::size_t>(s) < clip.object_boxes.size() && clip.object_boxes[s]) {
    const BBox box = *clip.object_boxes[s];
    std::erase_if(valid, [&](const Point2& p) { return !box.contains(p); });
  }
  out.provenance.dropped = out.provenance.valid_points.size() - valid.size();
  out.provenance.valid_points = valid;
  if (valid.empty()) {
    throw Error(Errc::AllPointsLost, "no projected point lies on the object", "filter");
  }

  const auto& frame = clip.frames[s];
  out.map = staged("rasterize", [&] {
    return rasterize_affordance_map(valid, frame.width, frame.height, cfg.sigma);
  });
  return out;
}

}  // namespace afforda
