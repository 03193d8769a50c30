#include "afforda/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "afforda/rng.hpp"

namespace afforda {

namespace {

constexpr double kSingularDet = 1e-12;
constexpr double kDegenerateSigma = 1e-8;
constexpr double kAtInfinity = 1e-12;

Eigen::Matrix3d normalize_matrix(const Eigen::Matrix3d& m) {
  const double fro = m.norm();
  if (!(fro > 0.0) || !std::isfinite(fro)) {
    throw Error(Errc::Singular, "homography matrix is zero or non-finite");
  }
  Eigen::Matrix3d out;
  if (std::abs(m(2, 2)) > 1e-12 * fro) {
    out = m / m(2, 2);
  } else {
    out = m / fro;
    Eigen::Index r = 0, c = 0;
    out.cwiseAbs().maxCoeff(&r, &c);
    if (out(r, c) < 0) out = -out;
  }
  if (std::abs((out / out.norm()).determinant()) <= kSingularDet) {
    throw Error(Errc::Singular, "homography matrix is singular");
  }
  return out;
}

// Similarity taking points to zero centroid and mean distance sqrt(2).
Eigen::Matrix3d hartley_transform(std::span<const Point2> pts) {
  double cx = 0.0, cy = 0.0;
  for (const auto& p : pts) {
    cx += p.x;
    cy += p.y;
  }
  cx /= double(pts.size());
  cy /= double(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += std::hypot(p.x - cx, p.y - cy);
  mean_dist /= double(pts.size());
  if (!(mean_dist > 1e-12)) {
    throw Error(Errc::Degenerate, "correspondence points are coincident");
  }
  const double s = std::sqrt(2.0) / mean_dist;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

Point2 transform(const Eigen::Matrix3d& t, const Point2& p) {
  const Eigen::Vector3d v = t * Eigen::Vector3d(p.x, p.y, 1.0);
  return {v.x() / v.z(), v.y() / v.z()};
}

}  // namespace

Homography::Homography(const Eigen::Matrix3d& m) : m_(normalize_matrix(m)) {}

Homography Homography::translation(double dx, double dy) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 2) = dx;
  m(1, 2) = dy;
  return Homography(m);
}

Homography estimate_homography_dlt(std::span<const Correspondence> corrs) {
  const std::size_t n = corrs.size();
  if (n < 4) {
    throw Error(Errc::Underdetermined,
                "need at least 4 correspondences, got " + std::to_string(n));
  }
  for (const auto& c : corrs) {
    if (!std::isfinite(c.src.x) || !std::isfinite(c.src.y) || !std::isfinite(c.dst.x) ||
        !std::isfinite(c.dst.y)) {
      throw Error(Errc::InvalidArgument, "correspondence coordinates must be finite");
    }
  }
  std::vector<Point2> src(n), dst(n);
  for (std::size_t i = 0; i < n; ++i) {
    src[i] = corrs[i].src;
    dst[i] = corrs[i].dst;
  }
  const Eigen::Matrix3d ts = hartley_transform(src);
  const Eigen::Matrix3d td = hartley_transform(dst);

  Eigen::MatrixXd a(2 * n, 9);
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 p = transform(ts, src[i]);
    const Point2 q = transform(td, dst[i]);
    const auto r = static_cast<Eigen::Index>(2 * i);
    a.row(r) << -p.x, -p.y, -1, 0, 0, 0, q.x * p.x, q.x * p.y, q.x;
    a.row(r + 1) << 0, 0, 0, -p.x, -p.y, -1, q.y * p.x, q.y * p.y, q.y;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A one-dimensional null space needs the 8th singular value clear of zero.
  if (sv.size() < 8 || sv(7) <= kDegenerateSigma * sv(0)) {
    throw Error(Errc::Degenerate, "correspondences do not determine a unique homography");
  }
  const Eigen::VectorXd h = svd.matrixV().col(8);
  Eigen::Matrix3d hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Eigen::Matrix3d m = td.inverse() * hn * ts;
  try {
    return Homography(m);
  } catch (const Error&) {
    throw Error(Errc::Degenerate, "estimated homography is singular");
  }
}

bool in_exclusion(const Point2& p, std::span<const ExclusionRegion> regions) {
  for (const auto& r : regions) {
    if (const auto* m = std::get_if<BinaryMask>(&r)) {
      if (m->contains(p)) return true;
    } else if (std::get<BBox>(r).contains(p)) {
      return true;
    }
  }
  return false;
}

double reprojection_error(const Homography& h, const Correspondence& c) {
  const Eigen::Vector3d v = h.matrix() * Eigen::Vector3d(c.src.x, c.src.y, 1.0);
  if (std::abs(v.z()) <= kAtInfinity) return std::numeric_limits<double>::infinity();
  return std::hypot(v.x() / v.z() - c.dst.x, v.y() / v.z() - c.dst.y);
}

RansacResult estimate_homography_ransac(std::span<const Correspondence> corrs,
                                        std::span<const ExclusionRegion> exclusion,
                                        const RansacOptions& opts) {
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    if (!in_exclusion(corrs[i].src, exclusion) && !in_exclusion(corrs[i].dst, exclusion)) {
      usable.push_back(i);
    }
  }
  if (usable.size() < 4) {
    throw Error(Errc::Underdetermined, std::to_string(usable.size()) +
                                           " correspondences remain after masking (need 4)");
  }

  auto score = [&](const Homography& h, std::vector<std::size_t>& members) {
    members.clear();
    double err_sum = 0.0;
    for (std::size_t idx : usable) {
      const double e = reprojection_error(h, corrs[idx]);
      if (e <= opts.inlier_px) {
        members.push_back(idx);
        err_sum += e;
      }
    }
    return err_sum;
  };

  Rng rng(opts.seed);
  std::vector<std::size_t> best, members;
  double best_err = std::numeric_limits<double>::infinity();
  Homography best_h;
  const std::size_t m = usable.size();
  const int cap = std::max(1, opts.max_iters);
  int needed = cap;
  int iter = 0;
  std::vector<Correspondence> minimal(4);
  for (; iter < needed; ++iter) {
    std::array<std::size_t, 4> pick{};
    for (std::size_t k = 0; k < 4; ++k) {
      bool fresh;
      do {
        pick[k] = static_cast<std::size_t>(rng.below(m));
        fresh = std::find(pick.begin(), pick.begin() + k, pick[k]) == pick.begin() + k;
      } while (!fresh);
      minimal[k] = corrs[usable[pick[k]]];
    }
    Homography h;
    try {
      h = estimate_homography_dlt(minimal);
    } catch (const Error&) {
      continue;
    }
    const double err = score(h, members);
    if (members.size() > best.size() || (members.size() == best.size() && err < best_err)) {
      best = members;
      best_err = err;
      best_h = h;
      const double w = double(best.size()) / double(m);
      const double denom = std::log(1.0 - std::pow(w, 4));
      if (w >= 1.0) {
        needed = std::min(needed, iter + 1);
      } else if (denom < 0.0) {
        const double k = std::ceil(std::log(1.0 - opts.confidence) / denom);
        needed = std::min(cap, static_cast<int>(std::min<double>(k, cap)));
        needed = std::max(needed, iter + 1);
      }
    }
  }
  if (best.size() < 4) {
    throw Error(Errc::NoConsensus, "best consensus set has " + std::to_string(best.size()) +
                                       " members (need 4)");
  }

  // Refit on the consensus set until it stops growing.
  Homography final_h = best_h;
  for (int round = 0; round < 5; ++round) {
    std::vector<Correspondence> subset;
    subset.reserve(best.size());
    for (std::size_t idx : best) subset.push_back(corrs[idx]);
    Homography refit;
    try {
      refit = estimate_homography_dlt(subset);
    } catch (const Error&) {
      break;
    }
    score(refit, members);
    if (members.size() < best.size()) break;
    final_h = refit;
    const bool grew = members.size() > best.size();
    best = members;
    if (!grew) break;
  }

  RansacResult out;
  out.h = final_h;
  out.iterations = iter;
  out.inliers.assign(corrs.size(), false);
  score(final_h, members);
  for (std::size_t idx : members) out.inliers[idx] = true;
  out.inlier_count = members.size();
  return out;
}

Point2 apply(const Homography& h, const Point2& p) {
  const auto& m = h.matrix();
  const double w = m(2, 0) * p.x + m(2, 1) * p.y + m(2, 2);
  if (std::abs(w) <= kAtInfinity) throw Error(Errc::AtInfinity, "point maps to the plane at infinity");
  return {(m(0, 0) * p.x + m(0, 1) * p.y + m(0, 2)) / w,
          (m(1, 0) * p.x + m(1, 1) * p.y + m(1, 2)) / w};
}

PointSet2D apply(const Homography& h, const PointSet2D& pts) {
  PointSet2D out;
  out.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    try {
      out.push_back(apply(h, pts[i]));
    } catch (const Error&) {
      throw Error(Errc::AtInfinity, "point " + std::to_string(i) + " maps to the plane at infinity");
    }
  }
  return out;
}

Homography compose(const Homography& outer, const Homography& inner) {
  return Homography(outer.matrix() * inner.matrix());
}

Homography invert(const Homography& h) {
  Eigen::FullPivLU<Eigen::Matrix3d> lu(h.matrix());
  if (!lu.isInvertible()) throw Error(Errc::Singular, "homography is not invertible");
  return Homography(lu.inverse());
}

}  // namespace afforda
