#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace statrag {

enum class ErrorCode : std::uint8_t {
  // ingest
  MissingColumn,
  NonNumericValue,
  EmptyFile,
  InsufficientData,
  ChannelCountMismatch,
  SeriesTooShort,
  WindowTooShort,
  InvalidSchema,
  // features
  EmptyInput,
  LengthMismatch,
  // embed
  ProviderUnavailable,
  AuthMissing,
  TextTooLong,
  NoNumericContent,
  // store
  DuplicateSegment,
  DimensionMismatch,
  EmptyIndex,
  NoCandidates,
  IoError,
  CorruptStore,
  ModeMismatch,
  InvalidWeights,
  // classify
  EmptyContexts,
  Timeout,
  // optimize
  DegenerateGeneration,
  NotEvaluated,
  // describe
  ConfigMismatch,
  MalformedDescriptor,
  // openset
  TooFewClasses,
  UnknownClass,
  EmptyLabel,
  // eval
  LabelOutOfSet,
  ConfigInvalid,
};

std::string_view to_string(ErrorCode code);

/// Base exception for the engine. Every failure surfaced by the library
/// carries a machine-readable code next to the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Raised by CSV loading when a sensor cell is not a finite decimal real.
class NonNumericValueError : public Error {
 public:
  NonNumericValueError(std::size_t row, const std::string& column, const std::string& cell)
      : Error(ErrorCode::NonNumericValue,
              "row " + std::to_string(row) + ", column '" + column + "': '" + cell + "'"),
        row_(row) {}

  /// 1-based data row (the header is not counted).
  std::size_t row() const noexcept { return row_; }

 private:
  std::size_t row_;
};

}  // namespace statrag
