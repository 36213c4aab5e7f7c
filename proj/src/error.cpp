#include "keco/error.hpp"

namespace keco {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroNormVector: return "ZeroNormVector";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::BlobSizeMismatch: return "BlobSizeMismatch";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::UnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::TruncatedSnapshot: return "TruncatedSnapshot";
    case ErrorCode::ChecksumFailure: return "ChecksumFailure";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::UnevenQuota: return "UnevenQuota";
    case ErrorCode::InsufficientClassSamples: return "InsufficientClassSamples";
    case ErrorCode::InsufficientStream: return "InsufficientStream";
    case ErrorCode::CoresetTooLarge: return "CoresetTooLarge";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::NoTargetForClass: return "NoTargetForClass";
    case ErrorCode::ShotCountExceedsCoreset: return "ShotCountExceedsCoreset";
    case ErrorCode::InsufficientChoices: return "InsufficientChoices";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

ErrorKind error_kind(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch:
    case ErrorCode::ZeroNormVector:
    case ErrorCode::NonFiniteValue:
    case ErrorCode::DuplicateId:
    case ErrorCode::BlobSizeMismatch:
    case ErrorCode::MalformedFile:
    case ErrorCode::IoFailure:
    case ErrorCode::UnsupportedVersion:
    case ErrorCode::TruncatedSnapshot:
    case ErrorCode::ChecksumFailure:
      return ErrorKind::Io;
    case ErrorCode::Internal:
      return ErrorKind::Internal;
    default:
      return ErrorKind::Validation;
  }
}

}  // namespace keco
