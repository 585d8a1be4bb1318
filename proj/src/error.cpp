#include "ioodg/error.hpp"

namespace ioodg {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::SingularTransform: return "SingularTransform";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::BadCount: return "BadCount";
    case ErrorCode::BadRadius: return "BadRadius";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotScalar: return "NotScalar";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::EmptyNeighborhood: return "EmptyNeighborhood";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace ioodg
