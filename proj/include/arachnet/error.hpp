#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace arachnet {

enum class ErrorCode {
  kSchemaViolation,
  kDuplicateId,
  kUnknownKind,
  kUnknownCapability,
  kIntentError,
  kTransportError,
  kUnknownGoalKind,
  kNoPlan,
  kCompileError,
  kMissingAdapter,
  kMissingRunInput,
  kAdapterMismatch,
  kUnknownCable,
  kUncoveredIp,
  kBadProbability,
  kInsufficientBaseline,
  kNoAnomaly,
  kReplayError,
  kIdCollision,
  kPreconditionFailed,
  kWrongState,
  kInvalidEdit,
  kConfigError,
  kNotFound,
  kIoError,
};

std::string_view error_code_name(ErrorCode code);

// Single exception type for the engine. `details` carries structured
// messages (validator output, offending files) that callers surface verbatim.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::vector<std::string> details = {});

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::vector<std::string> details_;
};

}  // namespace arachnet
