#include "afforda/motion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>

#include <Eigen/Dense>

namespace afforda {

void DbscanConfig::validate() const {
  if (!(eps > 0.0)) throw Error(Errc::InvalidArgument, "dbscan eps must be positive");
  if (min_pts < 1) throw Error(Errc::InvalidArgument, "dbscan min_pts must be >= 1");
}

DbscanConfig DbscanConfig::adaptive(const Trajectory3D& traj) {
  const auto& pts = traj.points;
  DbscanConfig cfg;
  cfg.min_pts = static_cast<int>(std::min<std::size_t>(3, std::max<std::size_t>(1, pts.size())));
  if (pts.empty()) return cfg;
  Vec3 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
    hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
  }
  const double diag = (hi - lo).norm();
  // Evenly sampled short tracks have steps larger than 5% of their extent,
  // so the step length bounds eps from below.
  std::vector<double> steps;
  for (std::size_t i = 1; i < pts.size(); ++i) steps.push_back((pts[i] - pts[i - 1]).norm());
  double median_step = 0.0;
  if (!steps.empty()) {
    std::nth_element(steps.begin(), steps.begin() + steps.size() / 2, steps.end());
    median_step = steps[steps.size() / 2];
  }
  cfg.eps = std::max({0.05 * diag, 2.0 * median_step, 1e-9});
  return cfg;
}

std::vector<int> dbscan(const std::vector<std::vector<double>>& points, const DbscanConfig& cfg) {
  cfg.validate();
  const std::size_t n = points.size();
  const double eps2 = cfg.eps * cfg.eps;
  auto neighbours = [&](std::size_t i) {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < n; ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < points[i].size(); ++k) {
        const double d = points[i][k] - points[j][k];
        d2 += d * d;
      }
      if (d2 <= eps2) out.push_back(j);
    }
    return out;
  };

  constexpr int kUnvisited = -2;
  std::vector<int> labels(n, kUnvisited);
  int cluster = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != kUnvisited) continue;
    auto seeds = neighbours(i);
    if (seeds.size() < static_cast<std::size_t>(cfg.min_pts)) {
      labels[i] = kNoise;
      continue;
    }
    labels[i] = cluster;
    std::deque<std::size_t> frontier(seeds.begin(), seeds.end());
    while (!frontier.empty()) {
      const std::size_t j = frontier.front();
      frontier.pop_front();
      if (labels[j] == kNoise) labels[j] = cluster;  // border point
      if (labels[j] != kUnvisited) continue;
      labels[j] = cluster;
      auto nb = neighbours(j);
      if (nb.size() >= static_cast<std::size_t>(cfg.min_pts)) {
        frontier.insert(frontier.end(), nb.begin(), nb.end());
      }
    }
    ++cluster;
  }
  return labels;
}

std::vector<int> dbscan(const std::vector<Vec3>& points, const DbscanConfig& cfg) {
  std::vector<std::vector<double>> rows;
  rows.reserve(points.size());
  for (const auto& p : points) rows.push_back({p.x, p.y, p.z});
  return dbscan(rows, cfg);
}

Trajectory3D clean_trajectory(const Trajectory3D& traj, const std::optional<DbscanConfig>& cfg,
                              int max_len) {
  if (traj.points.empty()) throw Error(Errc::EmptyAfterCleaning, "trajectory is empty");
  if (max_len < 1) throw Error(Errc::InvalidArgument, "max_len must be >= 1");
  const DbscanConfig used = cfg ? *cfg : DbscanConfig::adaptive(traj);
  const auto labels = dbscan(traj.points, used);
  Trajectory3D out{traj.pixel_id, {}};
  for (std::size_t i = 0; i < traj.points.size(); ++i) {
    if (labels[i] == kNoise) continue;
    out.points.push_back(traj.points[i]);
    if (out.points.size() == static_cast<std::size_t>(max_len)) break;
  }
  if (out.points.empty()) {
    throw Error(Errc::EmptyAfterCleaning,
                "every point of trajectory " + std::to_string(traj.pixel_id) + " is noise");
  }
  return out;
}

PrincipalDirection principal_direction(const Trajectory3D& traj) {
  const auto& pts = traj.points;
  if (pts.size() < 2) throw Error(Errc::DegenerateTrajectory, "need at least 2 points");
  double spread = 0.0;
  for (const auto& p : pts) spread = std::max(spread, (p - pts.front()).norm());
  if (spread <= 1e-12) throw Error(Errc::DegenerateTrajectory, "all points coincide");

  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : pts) mean += Eigen::Vector3d(p.x, p.y, p.z);
  mean /= double(pts.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector3d d = Eigen::Vector3d(p.x, p.y, p.z) - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= double(pts.size());

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  // Eigen returns eigenvalues in ascending order.
  const Eigen::Vector3d vals = solver.eigenvalues();
  Eigen::Vector3d top = solver.eigenvectors().col(2);

  const Vec3 disp = pts.back() - pts.front();
  double along = top.dot(Eigen::Vector3d(disp.x, disp.y, disp.z));
  if (along == 0.0) {
    Eigen::Index k = 0;
    top.cwiseAbs().maxCoeff(&k);
    along = top(k);
  }
  if (along < 0.0) top = -top;
  top.normalize();

  PrincipalDirection out;
  out.direction = {top.x(), top.y(), top.z()};
  out.eigenvalues = {vals(2), vals(1), vals(0)};
  out.ambiguous = (vals(2) - vals(1)) < 1e-9 * std::abs(vals(2));
  return out;
}

DirectionVector aggregate_direction(const std::vector<DirectionVector>& dirs) {
  if (dirs.empty()) throw Error(Errc::InvalidArgument, "no directions to aggregate");
  Vec3 sum{};
  for (const auto& d : dirs) sum = sum + d;
  const Vec3 mean = (1.0 / double(dirs.size())) * sum;
  if (mean.norm() < 1e-9) throw Error(Errc::CancelledOut, "directions cancel out");
  return mean.normalized();
}

DirectionCodebook::DirectionCodebook() {
  const auto& all = DiscreteDirection::all();
  for (std::size_t i = 0; i < all.size(); ++i) entries_[i] = {all[i], all[i].unit()};
}

const DirectionCodebook& default_codebook() {
  static const DirectionCodebook cb;
  return cb;
}

DiscreteDirection discretize_direction(const Vec3& v, const DirectionCodebook& cb) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(Errc::ZeroVector, "cannot discretize a zero vector");
  const auto& entries = cb.entries();
  std::size_t best = 0;
  double best_cos = -2.0;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const double c = v.dot(entries[i].unit) / n;
    if (c > best_cos) {
      best_cos = c;
      best = i;
    }
  }
  return entries[best].code;
}

MotionResult extract_motion_direction(const std::vector<Trajectory3D>& trajs,
                                      const MotionConfig& cfg) {
  cfg.axes.validate();
  MotionResult out;
  std::vector<DirectionVector> dirs;
  for (const auto& t : trajs) {
    try {
      const auto cleaned = clean_trajectory(t, cfg.dbscan, cfg.max_len);
      const auto pd = principal_direction(cleaned);
      if (pd.ambiguous) ++out.ambiguous;
      dirs.push_back(pd.direction);
    } catch (const Error& e) {
      ++out.dropped;
      out.drop_reasons.push_back("pixel " + std::to_string(t.pixel_id) + ": " + e.what());
    }
  }
  out.used = dirs.size();
  if (dirs.empty()) {
    throw Error(Errc::NoUsableTrajectories,
                "none of " + std::to_string(trajs.size()) + " trajectories is usable");
  }
  out.camera_direction = aggregate_direction(dirs);
  out.codebook_direction = cfg.axes.to_codebook(out.camera_direction);
  out.discrete = discretize_direction(out.codebook_direction);
  return out;
}

namespace {

constexpr std::array<std::array<std::string_view, 2>, 3> kAxisWords{{
    {"backward", "forward"},
    {"upward", "downward"},
    {"rightward", "leftward"},
}};

}  // namespace

std::string direction_label(const DiscreteDirection& d) {
  const int comps[3] = {d.a0, d.a1, d.a2};
  std::string out = "[";
  bool first = true;
  for (int axis = 0; axis < 3; ++axis) {
    if (comps[axis] == 0) continue;
    if (!first) out += ", ";
    out += kAxisWords[axis][comps[axis] > 0 ? 1 : 0];
    first = false;
  }
  return out + "]";
}

DiscreteDirection parse_direction_label(std::string_view label) {
  std::string s;
  for (char c : label) s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  auto trim = [](std::string_view v) {
    while (!v.empty() && std::isspace(static_cast<unsigned char>(v.front()))) v.remove_prefix(1);
    while (!v.empty() && std::isspace(static_cast<unsigned char>(v.back()))) v.remove_suffix(1);
    return v;
  };
  std::string_view body = trim(s);
  if (body.size() >= 2 && body.front() == '[' && body.back() == ']') {
    body = body.substr(1, body.size() - 2);
  }
  int comps[3] = {0, 0, 0};
  bool any = false;
  while (true) {
    const auto comma = body.find(',');
    const std::string_view word = trim(body.substr(0, comma));
    bool matched = false;
    for (int axis = 0; axis < 3 && !matched; ++axis) {
      for (int sign = 0; sign < 2; ++sign) {
        if (word != kAxisWords[axis][sign]) continue;
        if (comps[axis] != 0) {
          throw Error(Errc::InvalidDirectionLabel, "axis repeated in label: " + std::string(label));
        }
        comps[axis] = sign ? 1 : -1;
        matched = true;
        break;
      }
    }
    if (!matched) {
      throw Error(Errc::InvalidDirectionLabel, "unknown direction word '" + std::string(word) + "'");
    }
    any = true;
    if (comma == std::string_view::npos) break;
    body = body.substr(comma + 1);
  }
  if (!any) throw Error(Errc::InvalidDirectionLabel, "empty direction label");
  return DiscreteDirection::make(comps[0], comps[1], comps[2]);
}

}  // namespace afforda
