#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace keco {

enum class ErrorCode {
  // ingest / format
  DimensionMismatch,
  ZeroNormVector,
  NonFiniteValue,
  DuplicateId,
  UnknownLabel,
  UnknownId,
  BlobSizeMismatch,
  MalformedFile,
  IoFailure,
  // snapshots
  UnsupportedVersion,
  TruncatedSnapshot,
  ChecksumFailure,
  // configuration / preconditions
  InvalidConfig,
  UnevenQuota,
  InsufficientClassSamples,
  InsufficientStream,
  CoresetTooLarge,
  IdMismatch,
  NoTargetForClass,
  ShotCountExceedsCoreset,
  InsufficientChoices,
  EmptyInput,
  // broken internal invariant
  Internal,
};

/// Broad class of an error, used by the CLI to pick an exit code.
enum class ErrorKind { Validation, Io, Internal };

std::string_view error_code_name(ErrorCode code);
ErrorKind error_kind(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorKind kind() const noexcept { return error_kind(code_); }

 private:
  ErrorCode code_;
};

}  // namespace keco
