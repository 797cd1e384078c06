#include "ck/error.hpp"

namespace ck {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NoRoot: return "NoRoot";
    case ErrorCode::MultipleRoots: return "MultipleRoots";
    case ErrorCode::DanglingParent: return "DanglingParent";
    case ErrorCode::CycleDetected: return "CycleDetected";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MixedConversations: return "MixedConversations";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::EmptyDump: return "EmptyDump";
    case ErrorCode::NoPositives: return "NoPositives";
    case ErrorCode::NoNegatives: return "NoNegatives";
    case ErrorCode::TooFewConversations: return "TooFewConversations";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyWindow: return "EmptyWindow";
    case ErrorCode::AllMasked: return "AllMasked";
    case ErrorCode::UnknownTarget: return "UnknownTarget";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::Empty: return "Empty";
    case ErrorCode::BadCheckpoint: return "BadCheckpoint";
    case ErrorCode::Usage: return "Usage";
    case ErrorCode::Internal: return "Internal";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Usage:
    case ErrorCode::InvalidConfig:
      return 2;
    case ErrorCode::ProviderUnavailable:
      return 4;
    case ErrorCode::Internal:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::AllMasked:
    case ErrorCode::EmptyWindow:
      return 5;
    default:
      return 3;
  }
}

}  // namespace ck
