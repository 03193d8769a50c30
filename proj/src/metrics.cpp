#include "afforda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "afforda/contact.hpp"
#include "afforda/parallel.hpp"

namespace afforda {

namespace {

constexpr double kNormTolerance = 1e-6;

struct Taps {
  int first = 0;
  std::vector<double> weights;
};

// Triangle-filter taps for one output coordinate along an axis.
std::vector<Taps> triangle_taps(int in_size, int out_size) {
  const double scale = double(in_size) / double(out_size);
  const double filter_scale = std::max(1.0, scale);
  const double support = filter_scale;
  std::vector<Taps> taps(out_size);
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(0, static_cast<int>(std::floor(center - support)));
    const int hi = std::min(in_size - 1, static_cast<int>(std::ceil(center + support)));
    Taps t;
    t.first = lo;
    double total = 0.0;
    for (int j = lo; j <= hi; ++j) {
      const double d = std::abs((j + 0.5 - center) / filter_scale);
      const double w = d < 1.0 ? 1.0 - d : 0.0;
      t.weights.push_back(w);
      total += w;
    }
    if (total > 0.0) {
      for (auto& w : t.weights) w /= total;
    }
    taps[i] = std::move(t);
  }
  return taps;
}

void require_same_shape(const AffordanceMap& a, int w, int h) {
  if (a.width() != w || a.height() != h) {
    throw Error(Errc::ShapeMismatch, std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                                         " vs " + std::to_string(w) + "x" + std::to_string(h));
  }
}

void require_normalized(const AffordanceMap& m, const char* what) {
  if (std::abs(m.sum() - 1.0) > kNormTolerance) {
    throw Error(Errc::NotNormalized, std::string(what) + " does not sum to 1");
  }
}

void require_fixations(const AffordanceMap& pred, const FixationSet& fix) {
  require_same_shape(pred, fix.width, fix.height);
  if (fix.locations.empty()) throw Error(Errc::EmptyFixations, "fixation set is empty");
}

class Accumulator {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
    ++count_;
  }
  double total() const { return sum_ + comp_; }
  std::optional<double> mean() const {
    if (count_ == 0) return std::nullopt;
    return (sum_ + comp_) / double(count_);
  }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
  std::size_t count_ = 0;
};

}  // namespace

AffordanceMap resample_bilinear(const AffordanceMap& map, int width, int height) {
  if (width < 1 || height < 1) throw Error(Errc::InvalidArgument, "target size must be positive");
  if (map.width() < 1 || map.height() < 1) throw Error(Errc::ZeroMass, "empty map");
  if (map.width() == width && map.height() == height) return map;
  const auto xt = triangle_taps(map.width(), width);
  const auto yt = triangle_taps(map.height(), height);

  std::vector<double> horiz(static_cast<std::size_t>(width) * map.height(), 0.0);
  for (int y = 0; y < map.height(); ++y) {
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      const auto& t = xt[x];
      for (std::size_t k = 0; k < t.weights.size(); ++k) acc += t.weights[k] * map.at(t.first + int(k), y);
      horiz[static_cast<std::size_t>(y) * width + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(width) * height, 0.0);
  for (int y = 0; y < height; ++y) {
    const auto& t = yt[y];
    for (int x = 0; x < width; ++x) {
      double acc = 0.0;
      for (std::size_t k = 0; k < t.weights.size(); ++k) {
        acc += t.weights[k] * horiz[static_cast<std::size_t>(t.first + int(k)) * width + x];
      }
      out[static_cast<std::size_t>(y) * width + x] = std::max(0.0, acc);
    }
  }
  AffordanceMap resized(width, height, std::move(out));
  return resized.sum() > 0.0 ? resized.normalized() : resized;
}

AffordanceMap postprocess_heatmap(const AffordanceMap& map, int size) {
  if (!(map.sum() > 0.0)) throw Error(Errc::ZeroMass, "heatmap has no mass");
  AffordanceMap resized = resample_bilinear(map, size, size);
  if (resized.is_normalized()) return resized;
  return resized.normalized();
}

MaskHeatmap mask_to_heatmap(const BinaryMask& mask, int grid_step, double sigma) {
  if (grid_step < 1) throw Error(Errc::InvalidArgument, "grid_step must be >= 1");
  if (mask.empty()) throw Error(Errc::EmptyMask, "mask is empty");
  PointSet2D pts;
  for (int y = 0; y < mask.height(); y += grid_step) {
    for (int x = 0; x < mask.width(); x += grid_step) {
      if (mask.at(x, y)) pts.push_back({double(x), double(y)});
    }
  }
  MaskHeatmap out;
  out.lattice_points = pts.size();
  if (pts.empty()) {
    double cx = 0.0, cy = 0.0;
    std::size_t n = 0;
    for (int y = 0; y < mask.height(); ++y)
      for (int x = 0; x < mask.width(); ++x)
        if (mask.at(x, y)) {
          cx += x;
          cy += y;
          ++n;
        }
    pts.push_back({cx / double(n), cy / double(n)});
    out.centroid_fallback = true;
  }
  out.map = rasterize_affordance_map(pts, mask.width(), mask.height(), sigma);
  return out;
}

FixationSet binarize_gt(const AffordanceMap& gt, double threshold_fraction) {
  FixationSet fix{gt.width(), gt.height(), {}};
  const double peak = gt.max();
  if (peak > 0.0) {
    const auto& v = gt.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] / peak >= threshold_fraction) fix.locations.push_back(i);
    }
  }
  if (fix.locations.empty()) throw Error(Errc::EmptyFixations, "no pixel reaches the fixation threshold");
  return fix;
}

double sim(const AffordanceMap& pred, const AffordanceMap& gt) {
  require_same_shape(pred, gt.width(), gt.height());
  require_normalized(pred, "prediction");
  require_normalized(gt, "ground truth");
  const auto& p = pred.values();
  const auto& g = gt.values();
  Accumulator acc;
  for (std::size_t i = 0; i < p.size(); ++i) acc.add(std::min(p[i], g[i]));
  return acc.total();
}

double nss(const AffordanceMap& pred, const FixationSet& fix) {
  require_fixations(pred, fix);
  const auto& v = pred.values();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / double(v.size()));
  if (sd < 1e-12) return 0.0;
  double acc = 0.0;
  for (std::size_t idx : fix.locations) acc += (v[idx] - mean) / sd;
  return acc / double(fix.locations.size());
}

double auc_judd(const AffordanceMap& pred, const FixationSet& fix) {
  require_fixations(pred, fix);
  if (fix.contains_all()) return 1.0;
  const auto& v = pred.values();
  std::vector<char> is_fix(v.size(), 0);
  for (std::size_t idx : fix.locations) is_fix[idx] = 1;
  std::vector<double> pos, neg;
  pos.reserve(fix.locations.size());
  neg.reserve(v.size() - fix.locations.size());
  for (std::size_t i = 0; i < v.size(); ++i) (is_fix[i] ? pos : neg).push_back(v[i]);
  std::sort(pos.begin(), pos.end(), std::greater<>());
  std::sort(neg.begin(), neg.end());

  double area = 0.0, prev_tpr = 0.0, prev_fpr = 0.0;
  std::size_t i = 0;
  while (i < pos.size()) {
    const double t = pos[i];
    while (i < pos.size() && pos[i] == t) ++i;
    const double tpr = double(i) / double(pos.size());
    const auto above = neg.end() - std::lower_bound(neg.begin(), neg.end(), t);
    const double fpr = double(above) / double(neg.size());
    area += 0.5 * (tpr + prev_tpr) * (fpr - prev_fpr);
    prev_tpr = tpr;
    prev_fpr = fpr;
  }
  area += 0.5 * (1.0 + prev_tpr) * (1.0 - prev_fpr);
  return area;
}

double cosine_similarity(const Vec3& a, const Vec3& b) {
  const double na = a.norm(), nb = b.norm();
  if (!(na > 0.0) || !(nb > 0.0)) throw Error(Errc::ZeroVector, "cosine of a zero vector");
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

double cosine_similarity(const DiscreteDirection& a, const DiscreteDirection& b) {
  return cosine_similarity(a.vector(), b.vector());
}

MetricReport evaluate_sample(const std::optional<AffordanceMap>& pred_map,
                             const std::optional<DiscreteDirection>& pred_dir,
                             const SampleTruth& truth) {
  MetricReport r;
  r.sample_id = truth.id;
  if (pred_map && truth.gt_map) {
    const AffordanceMap pred = postprocess_heatmap(*pred_map);
    const AffordanceMap gt = postprocess_heatmap(*truth.gt_map);
    r.sim = sim(pred, gt);
    const FixationSet fix = binarize_gt(gt);
    r.nss = nss(pred, fix);
    r.auc_j = auc_judd(pred, fix);
    if (fix.contains_all()) r.flags.push_back("auc_all_fixations");
  }
  if (pred_dir && truth.gt_direction) r.cs = cosine_similarity(*pred_dir, *truth.gt_direction);
  return r;
}

BatchResult evaluate_batch(const std::vector<Prediction>& preds,
                           const std::vector<SampleTruth>& truths, int workers) {
  std::map<std::string, const SampleTruth*> by_id;
  for (const auto& t : truths) by_id[t.id] = &t;

  std::vector<std::optional<MetricReport>> slots(preds.size());
  std::vector<std::optional<SampleError>> errs(preds.size());
  parallel_for(preds.size(), workers, [&](std::size_t i) {
    const auto& p = preds[i];
    auto it = by_id.find(p.sample_id);
    if (it == by_id.end()) {
      errs[i] = SampleError{p.sample_id, "no ground truth for sample"};
      return;
    }
    try {
      slots[i] = evaluate_sample(p.map, p.direction, *it->second);
    } catch (const std::exception& e) {
      errs[i] = SampleError{p.sample_id, e.what()};
    }
  });

  BatchResult out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (slots[i]) out.reports.push_back(std::move(*slots[i]));
    if (errs[i]) out.errors.push_back(std::move(*errs[i]));
  }
  out.mean = aggregate_reports(out.reports);
  return out;
}

MetricReport aggregate_reports(const std::vector<MetricReport>& reports) {
  Accumulator s, n, a, c;
  for (const auto& r : reports) {
    if (r.sim) s.add(*r.sim);
    if (r.nss) n.add(*r.nss);
    if (r.auc_j) a.add(*r.auc_j);
    if (r.cs) c.add(*r.cs);
  }
  MetricReport m;
  m.sample_id = "mean";
  m.sim = s.mean();
  m.nss = n.mean();
  m.auc_j = a.mean();
  m.cs = c.mean();
  return m;
}

}  // namespace afforda
