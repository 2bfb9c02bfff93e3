#pragma once

#include <stdexcept>
#include <string>

namespace rmtopo {

// Mirrors rmtopo_status in the C API; values are part of the ABI.
enum class ErrorCode : int {
  kDimension = 1,
  kState = 2,
  kArgument = 3,
  kParse = 4,
  kConfig = 5,
  kNumeric = 6,
  kMissingInput = 7,
  kIo = 8,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

struct DimensionError : Error {
  explicit DimensionError(const std::string& w) : Error(ErrorCode::kDimension, w) {}
};
struct StateError : Error {
  explicit StateError(const std::string& w) : Error(ErrorCode::kState, w) {}
};
struct ArgumentError : Error {
  explicit ArgumentError(const std::string& w) : Error(ErrorCode::kArgument, w) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& w) : Error(ErrorCode::kParse, w) {}
};
struct ConfigError : Error {
  explicit ConfigError(const std::string& w) : Error(ErrorCode::kConfig, w) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& w) : Error(ErrorCode::kNumeric, w) {}
};
struct MissingInputError : Error {
  explicit MissingInputError(const std::string& w) : Error(ErrorCode::kMissingInput, w) {}
};

}  // namespace rmtopo
