#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ioodg {

enum class ErrorCode {
  NonFinite,
  SingularTransform,
  BadConfig,
  EmptyResult,
  BadCount,
  BadRadius,
  ShapeMismatch,
  NotScalar,
  BadLabel,
  TooFewPoints,
  ParseError,
  IoError,
  BadMagic,
  EmptyNeighborhood,
};

std::string_view to_string(ErrorCode code);

/// Every library failure is reported as an Error carrying a stable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace ioodg
