#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nef {

enum class ErrorKind {
  kDegenerateSignal,
  kLoad,
  kEmptySpan,
  kTiling,
  kNumericFailure,
  kFusion,
  kShapeMismatch,
  kLabelMismatch,
  kInsufficientData,
  kConfiguration,
  kInvalidArgument,
  kIo,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace nef
