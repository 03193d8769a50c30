#pragma once

#include <optional>
#include <string>
#include <vector>

#include "afforda/error.hpp"
#include "afforda/types.hpp"

namespace afforda {

constexpr int kBenchmarkSize = 224;
constexpr double kFixationThreshold = 200.0 / 255.0;

struct FixationSet {
  int width = 0;
  int height = 0;
  // Row-major pixel indices, ascending.
  std::vector<std::size_t> locations;

  bool contains_all() const { return locations.size() == static_cast<std::size_t>(width) * height; }
};

// Antialiased bilinear (triangle filter) resample to width x height followed
// by normalization. Identity when the size already matches.
AffordanceMap resample_bilinear(const AffordanceMap& map, int width, int height);
AffordanceMap postprocess_heatmap(const AffordanceMap& map, int size = kBenchmarkSize);

struct MaskHeatmap {
  AffordanceMap map;
  std::size_t lattice_points = 0;
  // No lattice point fell inside the mask; the mask centroid was used.
  bool centroid_fallback = false;
};

MaskHeatmap mask_to_heatmap(const BinaryMask& mask, int grid_step, double sigma);

FixationSet binarize_gt(const AffordanceMap& gt, double threshold_fraction = kFixationThreshold);

double sim(const AffordanceMap& pred, const AffordanceMap& gt);
double nss(const AffordanceMap& pred, const FixationSet& fix);
double auc_judd(const AffordanceMap& pred, const FixationSet& fix);

double cosine_similarity(const Vec3& a, const Vec3& b);
double cosine_similarity(const DiscreteDirection& a, const DiscreteDirection& b);

struct MetricReport {
  std::string sample_id;
  std::optional<double> sim;
  std::optional<double> nss;
  std::optional<double> auc_j;
  std::optional<double> cs;
  // Non-fatal conditions encountered while scoring ("auc_all_fixations", ...).
  std::vector<std::string> flags;
};

struct SampleTruth {
  std::string id;
  std::optional<AffordanceMap> gt_map;
  std::optional<DiscreteDirection> gt_direction;
};

MetricReport evaluate_sample(const std::optional<AffordanceMap>& pred_map,
                             const std::optional<DiscreteDirection>& pred_dir,
                             const SampleTruth& truth);

struct SampleError {
  std::string sample_id;
  std::string message;
};

struct BatchResult {
  std::vector<MetricReport> reports;
  std::vector<SampleError> errors;
  MetricReport mean;
};

struct Prediction {
  std::string sample_id;
  std::optional<AffordanceMap> map;
  std::optional<DiscreteDirection> direction;
};

// Scores every prediction against its truth (matched by id). Per-sample
// failures are recorded and do not stop the batch.
BatchResult evaluate_batch(const std::vector<Prediction>& preds,
                           const std::vector<SampleTruth>& truths, int workers = 1);

// Per-metric arithmetic mean over the reports defining it, with
// compensated summation. sample_id of the result is "mean".
MetricReport aggregate_reports(const std::vector<MetricReport>& reports);

}  // namespace afforda
