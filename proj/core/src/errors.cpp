#include "nefnet/errors.hpp"

namespace nef {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kDegenerateSignal: return "degenerate_signal";
    case ErrorKind::kLoad: return "load";
    case ErrorKind::kEmptySpan: return "empty_span";
    case ErrorKind::kTiling: return "tiling";
    case ErrorKind::kNumericFailure: return "numeric_failure";
    case ErrorKind::kFusion: return "fusion";
    case ErrorKind::kShapeMismatch: return "shape_mismatch";
    case ErrorKind::kLabelMismatch: return "label_mismatch";
    case ErrorKind::kInsufficientData: return "insufficient_data";
    case ErrorKind::kConfiguration: return "configuration";
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace nef
