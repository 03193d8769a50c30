#pragma once

// File formats: RLE masks, grayscale rasters, the JSONL manifest,
// trajectories, correspondences and append-only logs.

#include <array>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "afforda/types.hpp"

namespace afforda {

// Column-major run lengths, starting with a (possibly empty) run of zeros.
struct RleMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint32_t> counts;

  friend bool operator==(const RleMask&, const RleMask&) = default;
};

RleMask encode_rle(const BinaryMask& mask);
// Throws BadCounts when the runs do not sum to width*height.
BinaryMask decode_rle(const RleMask& rle);
// {"size": [h, w], "counts": [...]}
nlohmann::json rle_to_json(const RleMask& rle);
RleMask rle_from_json(const nlohmann::json& j);

// Nonzero pixels are set. Throws UnsupportedFormat unless 8-bit gray.
BinaryMask load_grayscale_mask(const std::string& path);
void save_grayscale_mask(const std::string& path, const BinaryMask& mask);
// Dispatches on the suffix: ".rle.json" sidecars or grayscale PNG.
BinaryMask load_mask(const std::string& path);
void save_rle(const std::string& path, const BinaryMask& mask);

// value/255 per pixel, not normalized. Throws ZeroMass when all zero.
AffordanceMap load_heatmap(const std::string& path);
// Max mapped to 255.
void save_heatmap(const std::string& path, const AffordanceMap& map);

// {"trajectories": [{"pixel_id": 3, "points": [[x, y, z], ...]}, ...]}
std::vector<Trajectory3D> parse_trajectories(const nlohmann::json& doc);
std::vector<Trajectory3D> load_trajectories(const std::string& path);
void save_trajectories(const std::string& path, const std::vector<Trajectory3D>& trajs);

// {"pairs": [[sx, sy, dx, dy], ...]}, src in frame t, dst in frame t-1.
std::vector<Correspondence> load_correspondences(const std::string& path);
void save_correspondences(const std::string& path, const std::vector<Correspondence>& pairs);

struct SampleRecord {
  std::string id;
  ImageRef image;
  std::string narration;
  std::optional<std::string> gt_map;
  std::optional<std::string> gt_direction;
  SampleSource source = SampleSource::real_world;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct ClipRecord {
  std::string sample_id;
  int width = 0;
  int height = 0;
  std::vector<std::string> frames;
  // nullopt: choose the frame of peak detection confidence.
  std::optional<int> contact_index;
  std::vector<std::optional<std::string>> hand_masks;
  std::vector<std::optional<std::string>> object_masks;
  std::vector<std::optional<BBox>> hand_boxes;
  std::vector<std::optional<BBox>> object_boxes;
  std::vector<std::optional<double>> confidences;
  std::vector<bool> contact_flags;
  std::vector<std::optional<std::string>> correspondences;
  std::vector<std::optional<std::array<double, 9>>> homographies;
  std::optional<std::string> trajectories;

  friend bool operator==(const ClipRecord&, const ClipRecord&) = default;
};

// Line-delimited: a {"kind":"manifest","version":1} header, then one
// "sample" or "clip" record per line. Paths are relative to the manifest.
struct Manifest {
  int version = 1;
  std::vector<SampleRecord> samples;
  std::vector<ClipRecord> clips;
  // Directory of the manifest file; not serialized.
  std::string base_dir;

  std::string resolve(const std::string& rel) const;
  const SampleRecord* find_sample(const std::string& id) const;
  const ClipRecord* find_clip(const std::string& sample_id) const;
};

constexpr int kManifestVersion = 1;

std::string manifest_to_string(const Manifest& m);
// ParseError names the line and field. With check_files every referenced
// path must exist; MissingFile lists all absent ones.
Manifest parse_manifest(const std::string& text, const std::string& base_dir, bool check_files = true);
Manifest load_manifest(const std::string& path, bool check_files = true);
void save_manifest(const Manifest& m, const std::string& path);

// Resolves the record's files into core types.
Sample load_sample(const Manifest& m, const SampleRecord& rec);
InteractionClip load_clip(const Manifest& m, const ClipRecord& rec);

// Single-writer append-only JSONL log. append() may be called from any
// thread; lines are written in the order they were enqueued.
class LogWriter {
 public:
  explicit LogWriter(const std::string& path, bool truncate = false);
  ~LogWriter();
  LogWriter(const LogWriter&) = delete;
  LogWriter& operator=(const LogWriter&) = delete;

  void append(const nlohmann::json& record);
  void append_line(std::string line);
  // Blocks until everything enqueued so far is on disk. Rethrows a write
  // failure as IoError.
  void flush();
  void close();

 private:
  void run();

  std::ofstream out_;
  std::string path_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::condition_variable drained_;
  std::deque<std::string> queue_;
  std::size_t enqueued_ = 0;
  std::size_t written_ = 0;
  bool stop_ = false;
  bool failed_ = false;
  std::thread worker_;
};

struct LogContents {
  std::vector<nlohmann::json> records;
  // Set when an incomplete final line was ignored.
  std::optional<std::string> warning;
};

// A malformed line before the last one is a ParseError; a torn final line
// is dropped with a warning.
LogContents load_log(const std::string& path);
void append_results(const std::string& path, const std::vector<nlohmann::json>& records);

enum class Verdict { accept, reject, flag };
enum class FailureMode { wrong_hand, occluded_hand, noisy_contact_frame, homography_drift, other };

std::string_view verdict_name(Verdict v);
std::string_view failure_mode_name(FailureMode f);
std::optional<Verdict> parse_verdict(std::string_view s);
std::optional<FailureMode> parse_failure_mode(std::string_view s);

struct ReviewDecision {
  std::string sample_id;
  Verdict verdict = Verdict::accept;
  std::optional<FailureMode> failure_mode;
  std::string reviewer;
  std::int64_t timestamp = 0;

  // Throws InvalidArgument when an accept carries a failure mode or a field
  // is empty.
  void validate() const;
  friend bool operator==(const ReviewDecision&, const ReviewDecision&) = default;
};

nlohmann::json decision_to_json(const ReviewDecision& d);
// Throws ParseError on missing or mistyped fields.
ReviewDecision decision_from_json(const nlohmann::json& j);
void append_decisions(const std::string& path, const std::vector<ReviewDecision>& decisions);
// Decision records of a log (other kinds skipped).
std::vector<ReviewDecision> load_decisions(const std::string& path);

// Latest decision per sample: per (sample, reviewer) the last in log order
// wins, then across reviewers the highest timestamp (later in the log on ties).
std::vector<ReviewDecision> effective_decisions(const std::vector<ReviewDecision>& log);
// Samples whose effective verdict is accept, in manifest order, with their
// clips.
Manifest export_accepted(const Manifest& m, const std::vector<ReviewDecision>& log);

// Rewrites every relative path so it resolves the same from `new_base_dir`.
Manifest rebase_manifest(const Manifest& m, const std::string& new_base_dir);

}  // namespace afforda
