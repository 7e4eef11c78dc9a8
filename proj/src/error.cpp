#include "tsr/error.hpp"

namespace tsr {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::MalformedStructure: return "MalformedStructure";
    case ErrorCode::InvalidGroundTruth: return "InvalidGroundTruth";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::AllIgnored: return "AllIgnored";
    case ErrorCode::InvalidSchedule: return "InvalidSchedule";
    case ErrorCode::IndivisibleImage: return "IndivisibleImage";
    case ErrorCode::InvalidTemperature: return "InvalidTemperature";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::InvalidRatio: return "InvalidRatio";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::SequenceTooLong: return "SequenceTooLong";
    case ErrorCode::CheckpointMismatch: return "CheckpointMismatch";
    case ErrorCode::GridOverflow: return "GridOverflow";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace tsr
