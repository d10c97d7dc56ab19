#include "statrag/error.hpp"

namespace statrag {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonNumericValue: return "NonNumericValue";
    case ErrorCode::EmptyFile: return "EmptyFile";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ChannelCountMismatch: return "ChannelCountMismatch";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::WindowTooShort: return "WindowTooShort";
    case ErrorCode::InvalidSchema: return "InvalidSchema";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
    case ErrorCode::AuthMissing: return "AuthMissing";
    case ErrorCode::TextTooLong: return "TextTooLong";
    case ErrorCode::NoNumericContent: return "NoNumericContent";
    case ErrorCode::DuplicateSegment: return "DuplicateSegment";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::NoCandidates: return "NoCandidates";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::CorruptStore: return "CorruptStore";
    case ErrorCode::ModeMismatch: return "ModeMismatch";
    case ErrorCode::InvalidWeights: return "InvalidWeights";
    case ErrorCode::EmptyContexts: return "EmptyContexts";
    case ErrorCode::Timeout: return "Timeout";
    case ErrorCode::DegenerateGeneration: return "DegenerateGeneration";
    case ErrorCode::NotEvaluated: return "NotEvaluated";
    case ErrorCode::ConfigMismatch: return "ConfigMismatch";
    case ErrorCode::MalformedDescriptor: return "MalformedDescriptor";
    case ErrorCode::TooFewClasses: return "TooFewClasses";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::EmptyLabel: return "EmptyLabel";
    case ErrorCode::LabelOutOfSet: return "LabelOutOfSet";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
  }
  return "Unknown";
}

}  // namespace statrag
