#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace posekit {

enum class ErrorCode {
  NoLabeledKeypoints,
  InvalidArea,
  DegeneratePose,
  CenterUndefined,
  InvalidKernel,
  OutOfBounds,
  NoOverlap,
  NotNormalized,
  EmptyGroup,
  ShapeError,
  EmptyDataset,
  InvalidDrop,
  ModelMissing,
  UsageError,
  InvalidConfig,
  IoError,
  ParseError,
};

std::string_view to_string(ErrorCode code);

/// Every recoverable failure in the library is reported as an Error carrying
/// a machine-readable code; the CLI turns these into JSON error records.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace posekit
