#include "afforda/metrics.hpp"

#include <cmath>

#include "afforda/contact.hpp"
#include "afforda/rng.hpp"
#include "check.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace afforda;
using namespace afforda::testing;

namespace {

AffordanceMap random_map(Rng& rng, int w, int h) {
  std::vector<double> v(std::size_t(w) * h);
  for (auto& x : v) x = rng.uniform();
  return AffordanceMap(w, h, v).normalized();
}

FixationSet random_fix(Rng& rng, int w, int h, double p) {
  FixationSet f{w, h, {}};
  for (std::size_t i = 0; i < std::size_t(w) * h; ++i)
    if (rng.uniform() < p) f.locations.push_back(i);
  if (f.locations.empty()) f.locations.push_back(rng.below(std::size_t(w) * h));
  return f;
}

std::vector<bool> fix_mask(const FixationSet& f) {
  std::vector<bool> m(std::size_t(f.width) * f.height);
  for (auto i : f.locations) m[i] = true;
  return m;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("resampling") {
  AffordanceMap u(448, 448, std::vector<double>(448 * 448, 1.0));
  auto r = postprocess_heatmap(u);
  CHECK(r.width() == 224);
  CHECK(std::abs(r.sum() - 1.0) < 1e-9);
  CHECK(std::abs(r.at(0, 0) - r.at(100, 57)) < 1e-12);

  Rng rng(2);
  auto m = random_map(rng, 224, 224);
  auto same = postprocess_heatmap(m);
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(std::abs(same.values()[i] - m.values()[i]) < 1e-12);

  for (int i : {3, 50, 111}) {
    std::vector<double> v(448 * 448, 0.0);
    v[std::size_t(2 * i) * 448 + 2 * i] = 1.0;
    AffordanceMap imp(448, 448, v);
    auto out = postprocess_heatmap(imp);
    CHECK(out.argmax() == std::array<int, 2>{i, i});
  }

  auto small = random_map(rng, 13, 9);
  auto up = resample_bilinear(small, 20, 31);
  auto ref = resample_ref(small, 20, 31);
  double worst = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) worst = std::max(worst, std::abs(up.values()[i] - ref[i]));
  CHECK(worst < 1e-12);
  auto down = resample_bilinear(random_map(rng, 40, 37), 11, 8);
  CHECK(std::abs(down.sum() - 1.0) < 1e-9);
  CHECK_ERRC(postprocess_heatmap(AffordanceMap(4, 4)), Errc::ZeroMass);
}

TEST_CASE("mask to heatmap") {
  BinaryMask full(10, 7);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 10; ++x) full.set(x, y);
  auto h = mask_to_heatmap(full, 3, 2.0);
  CHECK(h.lattice_points == 4 * 3);

  BinaryMask dot(20, 20);
  dot.set(8, 12);
  auto d = mask_to_heatmap(dot, 4, 2.0);
  CHECK(d.map == rasterize_affordance_map({{8, 12}}, 20, 20, 2.0));

  BinaryMask off(20, 20);
  off.set(9, 13);
  auto f = mask_to_heatmap(off, 4, 2.0);
  CHECK(f.centroid_fallback);
  CHECK(f.map.argmax() == std::array<int, 2>{9, 13});

  BinaryMask disk(60, 60);
  for (int y = 0; y < 60; ++y)
    for (int x = 0; x < 60; ++x)
      if ((x - 31) * (x - 31) + (y - 25) * (y - 25) <= 100) disk.set(x, y);
  auto c = mask_to_heatmap(disk, 4, 5.0);
  auto pk = c.map.argmax();
  CHECK(std::hypot(pk[0] - 31, pk[1] - 25) <= 5.0);
  CHECK_ERRC(mask_to_heatmap(BinaryMask(4, 4), 2, 1.0), Errc::EmptyMask);
}

TEST_CASE("fixations") {
  AffordanceMap m(3, 1, {0.1, 0.8, 0.1});
  auto f = binarize_gt(m);
  CHECK(f.locations == std::vector<std::size_t>{1});
  AffordanceMap u(4, 4, std::vector<double>(16, 1.0 / 16));
  CHECK(binarize_gt(u).contains_all());

  const double sigma = 6.0;
  auto bump = rasterize_affordance_map({{40, 40}}, 81, 81, sigma);
  auto fx = binarize_gt(bump);
  const double radius = sigma * std::sqrt(2 * std::log(255.0 / 200.0));
  for (int y = 0; y < 81; ++y)
    for (int x = 0; x < 81; ++x) {
      const double r = std::hypot(x - 40, y - 40);
      const bool in = std::binary_search(fx.locations.begin(), fx.locations.end(), std::size_t(y * 81 + x));
      if (r < radius - 1e-9) CHECK(in);
      if (r > radius + 1e-9) CHECK_FALSE(in);
    }
}

TEST_CASE("sim") {
  AffordanceMap a(2, 1, {0.5, 0.5}), b(2, 1, {1.0, 0.0}), c(2, 1, {0.0, 1.0});
  CHECK(sim(a, a) == doctest::Approx(1.0));
  CHECK(sim(b, c) == 0.0);
  CHECK(sim(a, b) == doctest::Approx(0.5));
  CHECK_ERRC(sim(AffordanceMap(2, 1, {2, 0}), b), Errc::NotNormalized);
  CHECK_ERRC(sim(AffordanceMap(1, 2, {0.5, 0.5}), a), Errc::ShapeMismatch);
}

TEST_CASE("nss") {
  AffordanceMap p(4, 1, {0, 0, 0, 1});
  CHECK(nss(p, FixationSet{4, 1, {3}}) == doctest::Approx(1.7320508).epsilon(1e-4));
  CHECK(std::abs(nss(p, FixationSet{4, 1, {0, 1, 2, 3}})) < 1e-12);
  AffordanceMap k(4, 1, {0.25, 0.25, 0.25, 0.25});
  CHECK(nss(k, FixationSet{4, 1, {1}}) == 0.0);
  CHECK_ERRC(nss(p, FixationSet{4, 1, {}}), Errc::EmptyFixations);
}

TEST_CASE("auc judd") {
  Rng rng(6);
  std::vector<double> v(64);
  FixationSet f{8, 8, {}};
  for (std::size_t i = 0; i < 64; ++i) {
    const bool fix = i % 7 == 0;
    if (fix) f.locations.push_back(i);
    v[i] = fix ? 1.0 : rng.uniform(0.0, 0.5);
  }
  CHECK(auc_judd(AffordanceMap(8, 8, v), f) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(auc_judd(AffordanceMap(8, 8, std::vector<double>(64, 1.0 / 64)), f) == doctest::Approx(0.5));

  double mean = 0;
  for (int t = 0; t < 100; ++t) {
    auto p = random_map(rng, 32, 32);
    mean += auc_judd(p, random_fix(rng, 32, 32, 0.1));
  }
  CHECK(std::abs(mean / 100 - 0.5) <= 0.02);
}

TEST_CASE("metric oracles on random pairs") {
  Rng rng(99);
  for (int t = 0; t < 50; ++t) {
    auto p = random_map(rng, 16, 16), g = random_map(rng, 16, 16);
    auto f = random_fix(rng, 16, 16, 0.2);
    CHECK(std::abs(sim(p, g) - sim_ref(p.values(), g.values())) <= 1e-9);
    CHECK(std::abs(nss(p, f) - nss_ref(p.values(), fix_mask(f))) <= 1e-9);
    CHECK(std::abs(auc_judd(p, f) - auc_judd_ref(p.values(), fix_mask(f))) <= 1e-6);
  }
}

TEST_CASE("cosine similarity") {
  auto f = DiscreteDirection::make(1, 0, 0);
  CHECK(cosine_similarity(f, f) == doctest::Approx(1.0));
  CHECK(cosine_similarity(f, DiscreteDirection::make(-1, 0, 0)) == doctest::Approx(-1.0));
  CHECK(cosine_similarity(f, DiscreteDirection::make(1, 1, 0)) == doctest::Approx(0.7071068).epsilon(1e-6));
  CHECK_ERRC(cosine_similarity(Vec3{0, 0, 0}, Vec3{1, 0, 0}), Errc::ZeroVector);
}

TEST_CASE("batch evaluation") {
  Rng rng(8);
  std::vector<Prediction> preds;
  std::vector<SampleTruth> truths;
  for (int i = 0; i < 10; ++i) {
    auto gt = rasterize_affordance_map({{rng.uniform(5, 45), rng.uniform(5, 35)}}, 50, 40, 4.0);
    auto d = DiscreteDirection::all()[rng.below(26)];
    truths.push_back({"s" + std::to_string(i), gt, d});
    preds.push_back({"s" + std::to_string(i), gt, d});
  }
  auto r = evaluate_batch(preds, truths, 3);
  REQUIRE(r.reports.size() == 10);
  CHECK(*r.mean.sim == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(*r.mean.auc_j >= 0.99);
  CHECK(*r.mean.cs == doctest::Approx(1.0));

  preds[4].map = AffordanceMap(50, 40);
  auto bad = evaluate_batch(preds, truths, 2);
  CHECK(bad.reports.size() == 9);
  REQUIRE(bad.errors.size() == 1);
  CHECK(bad.errors[0].sample_id == "s4");

  for (auto& p : preds) p.map = random_map(rng, 50, 40);
  auto mixed = evaluate_batch(preds, truths);
  double s = 0, n = 0, a = 0;
  for (const auto& rep : mixed.reports) {
    s += *rep.sim;
    n += *rep.nss;
    a += *rep.auc_j;
  }
  CHECK(std::abs(*mixed.mean.sim - s / 10) < 1e-12);
  CHECK(std::abs(*mixed.mean.nss - n / 10) < 1e-12);
  CHECK(std::abs(*mixed.mean.auc_j - a / 10) < 1e-12);
}

}
