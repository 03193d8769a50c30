#include "afforda/motion.hpp"

#include "afforda/metrics.hpp"
#include "afforda/rng.hpp"
#include "check.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace afforda;
using namespace afforda::testing;

namespace {

Trajectory3D line(const Vec3& start, const Vec3& step, int n) {
  Trajectory3D t;
  for (int i = 0; i < n; ++i) t.points.push_back(start + double(i) * step);
  return t;
}

Vec3 random_unit(Rng& rng) {
  for (;;) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    if (v.norm() > 1e-6) return v.normalized();
  }
}

double cos3(const Vec3& a, const Vec3& b) { return a.dot(b) / (a.norm() * b.norm()); }

}  // namespace

TEST_SUITE("motion") {

TEST_CASE("dbscan small cases") {
  std::vector<std::vector<double>> pts{{0}, {0.1}, {0.2}, {10}};
  auto l = dbscan(pts, {0.5, 2});
  CHECK(l == std::vector<int>{0, 0, 0, kNoise});
  CHECK(l == dbscan_ref(pts, 0.5, 2));

  std::vector<std::vector<double>> same(6, {1.0, 2.0});
  CHECK(dbscan(same, {0.1, 3}) == std::vector<int>(6, 0));

  std::vector<std::vector<double>> spread{{0}, {1}, {2}, {3}};
  CHECK(dbscan(spread, {0.5, 2}) == std::vector<int>(4, kNoise));

  CHECK_ERRC(dbscan(pts, {0.0, 2}), Errc::InvalidArgument);
  CHECK_ERRC(dbscan(pts, {1.0, 0}), Errc::InvalidArgument);
}

TEST_CASE("dbscan matches the reachability oracle") {
  Rng rng(31);
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + int(rng.below(50));
    const int dim = 1 + int(rng.below(3));
    std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
    for (auto& p : pts)
      for (auto& c : p) c = rng.uniform(0, 10);
    const double eps = rng.uniform(0.3, 3.0);
    const int mp = 1 + int(rng.below(5));
    CHECK(dbscan(pts, {eps, mp}) == dbscan_ref(pts, eps, mp));
  }
}

TEST_CASE("trajectory cleaning") {
  auto t = line({0, 0, 0}, {1, 0, 0}, 15);
  auto c = clean_trajectory(t, std::nullopt);
  REQUIRE(c.points.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(c.points[i] == t.points[i]);

  Trajectory3D cl;
  Rng rng(2);
  for (int i = 0; i < 8; ++i) cl.points.push_back({rng.uniform(0, 0.1), rng.uniform(0, 0.1), rng.uniform(0, 0.1)});
  auto clustered = cl;
  cl.points.insert(cl.points.begin() + 4, Vec3{50, 50, 50});
  auto cc = clean_trajectory(cl, DbscanConfig{0.5, 3});
  CHECK(cc.points == clustered.points);

  Trajectory3D single{7, {{1, 2, 3}}};
  CHECK(clean_trajectory(single, std::nullopt).points == single.points);
  CHECK_ERRC(clean_trajectory(Trajectory3D{}, std::nullopt), Errc::EmptyAfterCleaning);
}

TEST_CASE("principal direction of exact lines") {
  Trajectory3D t;
  for (int i = 0; i < 10; ++i) t.points.push_back({double(i), 2.0 * i, 0});
  auto d = principal_direction(t).direction;
  CHECK(d.x == doctest::Approx(0.4472136).epsilon(1e-6));
  CHECK(d.y == doctest::Approx(0.8944272).epsilon(1e-6));
  CHECK(std::abs(d.z) < 1e-9);
  std::reverse(t.points.begin(), t.points.end());
  auto r = principal_direction(t).direction;
  CHECK(r.x == doctest::Approx(-0.4472136).epsilon(1e-6));
  CHECK(r.y == doctest::Approx(-0.8944272).epsilon(1e-6));

  CHECK_ERRC(principal_direction(Trajectory3D{0, {{1, 1, 1}}}), Errc::DegenerateTrajectory);
  CHECK_ERRC(principal_direction(Trajectory3D{0, {{1, 1, 1}, {1, 1, 1}}}), Errc::DegenerateTrajectory);
}

TEST_CASE("principal direction under noise") {
  Rng rng(100);
  int ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Vec3 u = random_unit(rng);
    const double extent = 1.0;
    Trajectory3D t;
    for (int i = 0; i < 10; ++i) {
      Vec3 p = (extent * i / 9.0) * u;
      t.points.push_back(p + Vec3{0.01 * rng.normal(), 0.01 * rng.normal(), 0.01 * rng.normal()});
    }
    if (cos3(principal_direction(t).direction, u) >= 0.999) ++ok;
  }
  CHECK(ok == 100);
}

TEST_CASE("aggregation") {
  CHECK(aggregate_direction({{1, 0, 0}}) == Vec3{1, 0, 0});
  auto a = aggregate_direction({{1, 0, 0}, {0, 1, 0}});
  CHECK(a.x == doctest::Approx(0.70710678).epsilon(1e-6));
  CHECK(a.y == doctest::Approx(0.70710678).epsilon(1e-6));
  CHECK_ERRC(aggregate_direction({{1, 0, 0}, {-1, 0, 0}}), Errc::CancelledOut);
}

TEST_CASE("discretization") {
  CHECK(discretize_direction(Vec3{1, 1, 1}.normalized()) == DiscreteDirection::make(1, 1, 1));
  CHECK(discretize_direction({1, 0, 0}) == DiscreteDirection::make(1, 0, 0));
  CHECK(discretize_direction({0.8, 0.55, 0}) == DiscreteDirection::make(1, 1, 0));
  CHECK(discretize_ref({0.8, 0.55, 0}) == DiscreteDirection::make(1, 1, 0));
  CHECK_ERRC(discretize_direction({0, 0, 0}), Errc::ZeroVector);
  Rng rng(17);
  int agree = 0;
  for (int i = 0; i < 2000; ++i) {
    Vec3 v = random_unit(rng);
    agree += discretize_direction(v) == discretize_ref(v);
  }
  CHECK(agree == 2000);
}

TEST_CASE("extraction over several trajectories") {
  const Vec3 cam{0.3, -0.2, 0.93};
  const DiscreteDirection bin = discretize_ref(AxisMapping::camera_default().to_codebook(cam));
  Rng rng(5);
  std::vector<Trajectory3D> trajs;
  for (int k = 0; k < 5; ++k) {
    Trajectory3D t{k, {}};
    for (int i = 0; i < 12; ++i) {
      Vec3 p = (0.05 * i) * cam;
      t.points.push_back(p + Vec3{0.001 * rng.normal(), 0.001 * rng.normal(), 0.001 * rng.normal()});
    }
    trajs.push_back(t);
  }
  auto r = extract_motion_direction(trajs);
  CHECK(r.discrete == bin);
  CHECK(r.used == 5);

  trajs.back().points.assign(6, Vec3{1, 1, 1});
  auto r2 = extract_motion_direction(trajs);
  CHECK(r2.used == 4);
  CHECK(r2.dropped == 1);
  CHECK(r2.discrete == bin);

  CHECK_ERRC(extract_motion_direction({Trajectory3D{0, {{1, 1, 1}}}}), Errc::NoUsableTrajectories);
}

TEST_CASE("direction labels") {
  CHECK(direction_label(DiscreteDirection::make(-1, -1, 1)) == "[backward, upward, leftward]");
  CHECK(direction_label(DiscreteDirection::make(1, 0, 0)) == "[forward]");
  CHECK(direction_label(DiscreteDirection::make(0, 1, -1)) == "[downward, rightward]");
  for (const auto& d : DiscreteDirection::all()) CHECK(parse_direction_label(direction_label(d)) == d);
  CHECK_ERRC(parse_direction_label("[sideways]"), Errc::InvalidDirectionLabel);
  CHECK_ERRC(parse_direction_label("[forward, backward]"), Errc::InvalidDirectionLabel);
  CHECK_ERRC(parse_direction_label("[]"), Errc::InvalidDirectionLabel);
}

TEST_CASE("codebook axes") {
  // Camera forward is codebook forward, camera up (-y) is codebook upward.
  auto ax = AxisMapping::camera_default();
  CHECK(discretize_direction(ax.to_codebook({0, 0, 1})) == parse_direction_label("[forward]"));
  CHECK(discretize_direction(ax.to_codebook({0, -1, 0})) == parse_direction_label("[upward]"));
  CHECK(discretize_direction(ax.to_codebook({-1, 0, 0})) == parse_direction_label("[leftward]"));
}

}
