#pragma once

// Actor/Verifier refinement loop over the contact region and then the motion
// direction.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "afforda/backends.hpp"
#include "afforda/image.hpp"
#include "afforda/types.hpp"

namespace afforda {

enum class LoopMode { coordinate, som };
enum class Termination { approved, exhausted };

std::string_view mode_name(LoopMode m);
// Accepts "coordinate" or "som"; throws InvalidArgument otherwise.
LoopMode parse_mode(std::string_view s);

// Prompt templates keyed by name (contact_initial_coordinate, direction_best,
// ...). Placeholders are written {name}.
class PromptSet {
 public:
  // The templates bundled with the library.
  static PromptSet builtin();
  // Built-in set with every <name>.txt found in `dir` replacing its entry.
  static PromptSet with_overrides(const std::string& dir);

  const std::string& get(const std::string& name) const;
  void set(const std::string& name, std::string text);
  // Throws InvalidArgument naming the first template that misses a required
  // placeholder.
  void validate() const;

  static std::string render(const std::string& tmpl, const std::map<std::string, std::string>& vars);

 private:
  std::map<std::string, std::string> templates_;
};

struct LoopConfig {
  // Maximum number of refinements T; a stage makes at most T+1 proposals.
  int max_iterations = 3;
  LoopMode mode = LoopMode::coordinate;
  // K for the SoM partition.
  int som_candidates = 12;
  PromptSet prompts = PromptSet::builtin();

  void validate() const;
};

struct Feedback {
  bool approve = false;
  std::string part;
  std::string appearance;
  std::string relative_position;
  std::string raw;
  // Reject without any advisory field, or an unparseable reply.
  bool degraded = false;
};

struct ProposalRecord {
  int step = 0;
  std::optional<BBox> bbox;
  // 1-based candidate indices, sorted.
  std::vector<int> candidates;
  std::optional<DiscreteDirection> direction;
  std::string reply;
  bool retried = false;
  bool stagnant = false;
  // FNV-1a of the rendered region overlay PNG (region stage only).
  std::string overlay_digest;
};

struct IterationTrace {
  std::string sample_id;
  Stage stage = Stage::contact;
  LoopMode mode = LoopMode::coordinate;
  int max_iterations = 0;
  std::vector<ProposalRecord> proposals;
  std::vector<Feedback> feedbacks;
  int final_index = 0;
  Termination termination = Termination::approved;
  // V_B reply was out of range or unparseable.
  bool best_clamped = false;
  int initial_calls = 0;
  int diagnose_calls = 0;
  int refine_calls = 0;
  int best_calls = 0;
  int retries = 0;

  int total_calls() const { return initial_calls + diagnose_calls + refine_calls + best_calls; }
};

// Keys sorted; dump() of the result is the trace log line.
nlohmann::json trace_to_json(const IterationTrace& trace);

struct Observation {
  std::string sample_id;
  RgbImage image;
  Instruction instruction;
};

struct Backends {
  ModelBackend& model;
  SegmentationBackend& segmentation;
};

// Reply parsers. Each returns nullopt when the reply carries no usable answer.
// "(x0, y0, x1, y1)" or "[x0, y0, x1, y1]"; corners are ordered and clamped
// to the image.
std::optional<BBox> parse_bbox_reply(const std::string& reply, int width, int height);
// "regions: 3, 7"; every index must lie in [1, k].
std::optional<std::vector<int>> parse_som_reply(const std::string& reply, int k);
// First bracketed direction label, e.g. "[backward, upward]".
std::optional<DiscreteDirection> parse_direction_reply(const std::string& reply);
// First integer in the reply.
std::optional<int> parse_index_reply(const std::string& reply);
// Labelled VERDICT/PART/APPEARANCE/RELATIVE sections, or a bare
// "APPROVE" / "REJECT <part>; <appearance>; <relative>" reply.
Feedback parse_feedback(const std::string& reply);

// Everything one stage run needs besides the model backend. For the contact
// stage in som mode `partitions` and `som_overlay` are filled; the direction
// stage carries the confirmed region and its overlay.
struct StageContext {
  Stage stage = Stage::contact;
  const Observation* obs = nullptr;
  const LoopConfig* cfg = nullptr;
  SegmentationBackend* segmentation = nullptr;
  std::vector<BinaryMask> partitions;
  RgbImage som_overlay;
  RgbImage region_overlay;

  static StageContext contact(const Observation& obs, const LoopConfig& cfg, SegmentationBackend& seg);
  static StageContext direction(const Observation& obs, const LoopConfig& cfg, const BinaryMask& region);
};

// Single Actor/Verifier calls. `trace` receives call counters.
ProposalRecord run_actor_initial(const StageContext& ctx, ModelBackend& model, IterationTrace& trace);
Feedback run_verifier_diagnose(const StageContext& ctx, const ProposalRecord& proposal, ModelBackend& model,
                               IterationTrace& trace);
ProposalRecord run_actor_refine(const StageContext& ctx, const ProposalRecord& previous, const Feedback& feedback,
                                ModelBackend& model, IterationTrace& trace);
// 0-based choice. One proposal short-circuits without a call; a missing or
// out-of-range answer selects the last proposal and sets best_clamped.
int run_verifier_best(const StageContext& ctx, const std::vector<ProposalRecord>& proposals, ModelBackend& model,
                      IterationTrace& trace);

// Mask of a region proposal: segment(bbox) or the union of its candidates.
BinaryMask proposal_mask(const StageContext& ctx, const ProposalRecord& proposal);

struct ContactStageResult {
  BinaryMask region;
  IterationTrace trace;
};

struct DirectionStageResult {
  DiscreteDirection direction;
  IterationTrace trace;
};

ContactStageResult run_contact_stage(const Observation& obs, const LoopConfig& cfg, Backends backends);
DirectionStageResult run_direction_stage(const Observation& obs, const BinaryMask& region, const LoopConfig& cfg,
                                         Backends backends);

struct SamplePrediction {
  ContactStageResult contact;
  DirectionStageResult direction;
};

// Contact stage followed by the direction stage on its region.
SamplePrediction run_sample(const Observation& obs, const LoopConfig& cfg, Backends backends);

}  // namespace afforda
