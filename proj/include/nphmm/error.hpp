#pragma once

#include <stdexcept>
#include <string>

namespace nphmm {

enum class ErrorCode {
  InvalidArgument,
  InvalidModel,
  DimensionMismatch,
  NonUniqueStationary,
  SequenceTooShort,
  EmptyState,
  ZeroWeight,
  IncompatibleFamily,
  DegenerateData,
  DegenerateDenominator,
  RankDeficient,
  KTooLarge,
  EmptyGrid,
  LengthMismatch,
  ParseError,
  FitFailed,
};

const char* to_string(ErrorCode code);

// Every failure raised by the library carries a code so callers (the CLI in
// particular) can classify it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code), message_(what) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the leading code name.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace nphmm
