#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vcemo {

enum class Errc {
  // data ingestion
  MissingFile,
  MalformedRecord,
  UnknownLabel,
  DuplicateId,
  TooFewSamples,
  EmptyResult,
  SessionCountMismatch,
  // audio
  EmptyAudio,
  NonFiniteSample,
  SilentSignal,
  OutOfRangeShift,
  OutOfRangeRate,
  UnsupportedAudio,
  // text providers
  ProviderUnavailable,
  TranscriptionFailed,
  EmptyText,
  // model
  EmptyInput,
  DimensionMismatch,
  ShapeMismatch,
  AllKeysMasked,
  // contrastive
  BatchTooSmall,
  NoPositivesAnywhere,
  NonFiniteInput,
  DropoutDisabled,
  EvalMode,
  // metrics
  LengthMismatch,
  LabelOutOfRange,
  // harness
  InvalidConfig,
  NonFiniteLoss,
  EmptyEvalSet,
  IncompatibleCheckpoint,
  CorruptCheckpoint,
  Io,
};

std::string_view errc_name(Errc code) noexcept;

/// True for errors caused by bad user input (manifests, configs, flags)
/// rather than by a failure while running.
bool is_validation_error(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace vcemo
