#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tsr {

enum class ErrorCode {
  UnknownToken,
  MalformedStructure,
  InvalidGroundTruth,
  EmptyCorpus,
  ShapeMismatch,
  AllIgnored,
  InvalidSchedule,
  IndivisibleImage,
  InvalidTemperature,
  IndexOutOfRange,
  NonFiniteLoss,
  InvalidRatio,
  ConfigMismatch,
  SequenceTooLong,
  CheckpointMismatch,
  GridOverflow,
  MalformedRecord,
  ConfigError,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

/// Every library failure is reported as a tsr::Error carrying a stable code,
/// so the CLI can emit a machine-readable report.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string{error_code_name(code)} + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Parse failure with the offending token position.
class MalformedStructure : public Error {
 public:
  MalformedStructure(std::size_t position, const std::string& reason)
      : Error(ErrorCode::MalformedStructure, "at token " + std::to_string(position) + ": " + reason),
        position_(position),
        reason_(reason) {}

  std::size_t position() const noexcept { return position_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t position_;
  std::string reason_;
};

}  // namespace tsr
