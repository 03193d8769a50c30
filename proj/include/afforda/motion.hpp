#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "afforda/error.hpp"
#include "afforda/types.hpp"

namespace afforda {

struct DbscanConfig {
  double eps = 1.0;
  int min_pts = 3;

  void validate() const;
  // Scale-adaptive default for a single trajectory; see clean_trajectory.
  static DbscanConfig adaptive(const Trajectory3D& traj);
};

constexpr int kNoise = -1;

// Density-based clustering with inclusive eps-neighbourhoods that count the
// point itself. Clusters are numbered 0.. in scan order of their first core
// point; border points join the first cluster that reaches them.
std::vector<int> dbscan(const std::vector<std::vector<double>>& points, const DbscanConfig& cfg);
std::vector<int> dbscan(const std::vector<Vec3>& points, const DbscanConfig& cfg);

// Drops DBSCAN noise (temporal order kept) and truncates to max_len points.
// Without an explicit config the adaptive default is used.
Trajectory3D clean_trajectory(const Trajectory3D& traj, const std::optional<DbscanConfig>& cfg,
                              int max_len = 10);

struct PrincipalDirection {
  DirectionVector direction;
  // Covariance eigenvalues, largest first.
  std::array<double, 3> eigenvalues{};
  // Top two eigenvalues within 1e-9 relative of each other.
  bool ambiguous = false;
};

// Top eigenvector of the population covariance, oriented along net
// displacement (last - first) and normalized.
PrincipalDirection principal_direction(const Trajectory3D& traj);

// Mean of unit directions renormalized; throws CancelledOut when it vanishes.
DirectionVector aggregate_direction(const std::vector<DirectionVector>& dirs);

class DirectionCodebook {
 public:
  struct Entry {
    DiscreteDirection code;
    Vec3 unit;
  };

  DirectionCodebook();
  const std::array<Entry, 26>& entries() const { return entries_; }

 private:
  std::array<Entry, 26> entries_;
};

const DirectionCodebook& default_codebook();

// Nearest codebook entry by cosine similarity. `v` is expressed in codebook
// axes. Ties go to the lexicographically smallest code.
DiscreteDirection discretize_direction(const Vec3& v, const DirectionCodebook& cb = default_codebook());

struct MotionConfig {
  // nullopt selects DbscanConfig::adaptive per trajectory.
  std::optional<DbscanConfig> dbscan;
  int max_len = 10;
  AxisMapping axes = AxisMapping::camera_default();
};

struct MotionResult {
  DirectionVector camera_direction;    // x right, y down, z forward
  Vec3 codebook_direction;             // same vector in codebook axes
  DiscreteDirection discrete;
  std::size_t used = 0;
  std::size_t dropped = 0;
  std::size_t ambiguous = 0;
  std::vector<std::string> drop_reasons;
};

MotionResult extract_motion_direction(const std::vector<Trajectory3D>& trajs,
                                      const MotionConfig& cfg = {});

// "[backward, upward, leftward]" style rendering, zero axes omitted.
std::string direction_label(const DiscreteDirection& d);
// Inverse of direction_label; throws InvalidDirectionLabel on anything else.
DiscreteDirection parse_direction_label(std::string_view label);

}  // namespace afforda
