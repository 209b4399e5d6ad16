#include "kernelsmith/error.hpp"

namespace ks {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kEmptySentence: return "empty-sentence";
    case ErrorCode::kEmptyInput: return "empty-input";
    case ErrorCode::kInsufficientData: return "insufficient-data";
    case ErrorCode::kTooShort: return "too-short";
    case ErrorCode::kNoPairs: return "no-pairs";
    case ErrorCode::kEmptyDataset: return "empty-dataset";
    case ErrorCode::kEndOfCurve: return "end-of-curve";
    case ErrorCode::kShapeError: return "shape-error";
    case ErrorCode::kDegenerate: return "degenerate";
    case ErrorCode::kEmptyVocabulary: return "empty-vocabulary";
    case ErrorCode::kRankError: return "rank-error";
    case ErrorCode::kUndefined: return "undefined";
    case ErrorCode::kParseError: return "parse-error";
    case ErrorCode::kIoError: return "io-error";
    case ErrorCode::kBadRequest: return "bad-request";
    case ErrorCode::kServiceUnready: return "service-unready";
  }
  return "unknown";
}

}  // namespace ks
