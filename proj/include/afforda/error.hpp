#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace afforda {

enum class Errc {
  InvalidArgument,
  MissingArticle,
  EmptySide,
  NoDetections,
  Underdetermined,
  Degenerate,
  NoConsensus,
  AtInfinity,
  Singular,
  NoContact,
  MisalignedInputs,
  AllPointsLost,
  EmptyPoints,
  EmptyAfterCleaning,
  DegenerateTrajectory,
  CancelledOut,
  ZeroVector,
  NoUsableTrajectories,
  ZeroMass,
  EmptyMask,
  EmptyFixations,
  ShapeMismatch,
  NotNormalized,
  BackendError,
  UnparseableReply,
  InvalidDirectionLabel,
  OverlappingPartitions,
  BadK,
  ParseError,
  MissingFile,
  BadCounts,
  UnsupportedFormat,
  RaggedTrajectory,
  NonFinite,
  IoError,
};

std::string_view errc_name(Errc code) noexcept;

// All library failures are reported through this type. `stage` names the
// pipeline step that failed ("sample", "backproject", "contact/step 2", ...)
// and is empty for leaf operations.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::string stage = {});

  Errc code() const noexcept { return code_; }
  const std::string& stage() const noexcept { return stage_; }
  const std::string& detail() const noexcept { return detail_; }

  // Returns a copy with `outer` prepended to the stage path.
  Error with_stage(const std::string& outer) const;

 private:
  Errc code_;
  std::string stage_;
  std::string detail_;
};

}  // namespace afforda
