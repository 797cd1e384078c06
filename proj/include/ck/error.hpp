#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ck {

enum class ErrorCode {
  // conversation model
  NoRoot,
  MultipleRoots,
  DanglingParent,
  CycleDetected,
  DuplicateId,
  MixedConversations,
  UnknownId,
  // ingestion
  IoFailure,
  MalformedRecord,
  EmptyDump,
  NoPositives,
  NoNegatives,
  TooFewConversations,
  InvalidConfig,
  // embedding / model
  ProviderUnavailable,
  DimensionMismatch,
  EmptyWindow,
  AllMasked,
  UnknownTarget,
  // training / evaluation
  EmptyDataset,
  LengthMismatch,
  Empty,
  BadCheckpoint,
  // cli
  Usage,
  Internal,
};

std::string_view to_string(ErrorCode code);

/// Every module reports failures through this exception. The message names the
/// offending ids, line numbers or dimensions.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Process exit status for an error: 2 usage, 3 data, 4 provider, 5 internal.
int exit_code_for(ErrorCode code);

}  // namespace ck
