#include "afforda/error.hpp"

namespace afforda {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::MissingArticle: return "MissingArticle";
    case Errc::EmptySide: return "EmptySide";
    case Errc::NoDetections: return "NoDetections";
    case Errc::Underdetermined: return "Underdetermined";
    case Errc::Degenerate: return "Degenerate";
    case Errc::NoConsensus: return "NoConsensus";
    case Errc::AtInfinity: return "AtInfinity";
    case Errc::Singular: return "Singular";
    case Errc::NoContact: return "NoContact";
    case Errc::MisalignedInputs: return "MisalignedInputs";
    case Errc::AllPointsLost: return "AllPointsLost";
    case Errc::EmptyPoints: return "EmptyPoints";
    case Errc::EmptyAfterCleaning: return "EmptyAfterCleaning";
    case Errc::DegenerateTrajectory: return "DegenerateTrajectory";
    case Errc::CancelledOut: return "CancelledOut";
    case Errc::ZeroVector: return "ZeroVector";
    case Errc::NoUsableTrajectories: return "NoUsableTrajectories";
    case Errc::ZeroMass: return "ZeroMass";
    case Errc::EmptyMask: return "EmptyMask";
    case Errc::EmptyFixations: return "EmptyFixations";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NotNormalized: return "NotNormalized";
    case Errc::BackendError: return "BackendError";
    case Errc::UnparseableReply: return "UnparseableReply";
    case Errc::InvalidDirectionLabel: return "InvalidDirectionLabel";
    case Errc::OverlappingPartitions: return "OverlappingPartitions";
    case Errc::BadK: return "BadK";
    case Errc::ParseError: return "ParseError";
    case Errc::MissingFile: return "MissingFile";
    case Errc::BadCounts: return "BadCounts";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::RaggedTrajectory: return "RaggedTrajectory";
    case Errc::NonFinite: return "NonFinite";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

std::string compose_what(Errc code, const std::string& stage, const std::string& message) {
  std::string out;
  if (!stage.empty()) out += "[" + stage + "] ";
  out += std::string(errc_name(code));
  if (!message.empty()) out += ": " + message;
  return out;
}

}  // namespace

Error::Error(Errc code, const std::string& message, std::string stage)
    : std::runtime_error(compose_what(code, stage, message)),
      code_(code),
      stage_(std::move(stage)),
      detail_(message) {}

Error Error::with_stage(const std::string& outer) const {
  return Error(code_, detail_, stage_.empty() ? outer : outer + "/" + stage_);
}

}  // namespace afforda
