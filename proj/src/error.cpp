#include "nphmm/error.hpp"

namespace nphmm {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidModel: return "InvalidModel";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonUniqueStationary: return "NonUniqueStationary";
    case ErrorCode::SequenceTooShort: return "SequenceTooShort";
    case ErrorCode::EmptyState: return "EmptyState";
    case ErrorCode::ZeroWeight: return "ZeroWeight";
    case ErrorCode::IncompatibleFamily: return "IncompatibleFamily";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::DegenerateDenominator: return "DegenerateDenominator";
    case ErrorCode::RankDeficient: return "RankDeficient";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::EmptyGrid: return "EmptyGrid";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::FitFailed: return "FitFailed";
  }
  return "Unknown";
}

}  // namespace nphmm
