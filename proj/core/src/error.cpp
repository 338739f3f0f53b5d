#include "cpdp/error.hpp"

namespace cpdp {

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "E_INVALID_ARGUMENT";
    case ErrorCode::kUnsupportedShape: return "E_UNSUPPORTED_SHAPE";
    case ErrorCode::kDegenerateTruncation: return "E_DEGENERATE_TRUNCATION";
    case ErrorCode::kEmptyDataset: return "E_EMPTY_DATASET";
    case ErrorCode::kEmptyCloud: return "E_EMPTY_CLOUD";
    case ErrorCode::kParse: return "E_PARSE";
    case ErrorCode::kValidation: return "E_VALIDATION";
    case ErrorCode::kConfig: return "E_CONFIG";
    case ErrorCode::kIo: return "E_IO";
  }
  return "E_UNKNOWN";
}

void throw_invalid(const std::string& message) {
  throw Error(ErrorCode::kInvalidArgument, message);
}

}  // namespace cpdp
