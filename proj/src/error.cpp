#include "vcemo/error.hpp"

namespace vcemo {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::MissingFile: return "MissingFile";
    case Errc::MalformedRecord: return "MalformedRecord";
    case Errc::UnknownLabel: return "UnknownLabel";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::EmptyResult: return "EmptyResult";
    case Errc::SessionCountMismatch: return "SessionCountMismatch";
    case Errc::EmptyAudio: return "EmptyAudio";
    case Errc::NonFiniteSample: return "NonFiniteSample";
    case Errc::SilentSignal: return "SilentSignal";
    case Errc::OutOfRangeShift: return "OutOfRangeShift";
    case Errc::OutOfRangeRate: return "OutOfRangeRate";
    case Errc::UnsupportedAudio: return "UnsupportedAudio";
    case Errc::ProviderUnavailable: return "ProviderUnavailable";
    case Errc::TranscriptionFailed: return "TranscriptionFailed";
    case Errc::EmptyText: return "EmptyText";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::AllKeysMasked: return "AllKeysMasked";
    case Errc::BatchTooSmall: return "BatchTooSmall";
    case Errc::NoPositivesAnywhere: return "NoPositivesAnywhere";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::DropoutDisabled: return "DropoutDisabled";
    case Errc::EvalMode: return "EvalMode";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::LabelOutOfRange: return "LabelOutOfRange";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::NonFiniteLoss: return "NonFiniteLoss";
    case Errc::EmptyEvalSet: return "EmptyEvalSet";
    case Errc::IncompatibleCheckpoint: return "IncompatibleCheckpoint";
    case Errc::CorruptCheckpoint: return "CorruptCheckpoint";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

bool is_validation_error(Errc code) noexcept {
  switch (code) {
    case Errc::MissingFile:
    case Errc::MalformedRecord:
    case Errc::UnknownLabel:
    case Errc::DuplicateId:
    case Errc::TooFewSamples:
    case Errc::EmptyResult:
    case Errc::SessionCountMismatch:
    case Errc::UnsupportedAudio:
    case Errc::OutOfRangeShift:
    case Errc::OutOfRangeRate:
    case Errc::InvalidConfig:
    case Errc::IncompatibleCheckpoint:
    case Errc::CorruptCheckpoint:
      return true;
    default:
      return false;
  }
}

}  // namespace vcemo
