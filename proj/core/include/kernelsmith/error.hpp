#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ks {

enum class ErrorCode {
  kInvalidArgument,
  kEmptySentence,
  kEmptyInput,
  kInsufficientData,
  kTooShort,
  kNoPairs,
  kEmptyDataset,
  kEndOfCurve,
  kShapeError,
  kDegenerate,
  kEmptyVocabulary,
  kRankError,
  kUndefined,
  kParseError,
  kIoError,
  kBadRequest,
  kServiceUnready,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this type; code() is stable API.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace ks
