#pragma once

#include <stdexcept>
#include <string>

namespace posecode {

// Exit-code map shared between library errors and the CLI:
// 0 ok, 2 usage, 3 data, 4 artifact mismatch, 5 numeric failure.
enum class ErrorCode : int {
  ok = 0,
  usage = 2,
  data = 3,
  artifact_mismatch = 4,
  numeric = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error(ErrorCode::usage, msg) {}
};

class DataError : public Error {
 public:
  explicit DataError(const std::string& msg) : Error(ErrorCode::data, msg) {}
};

class ArtifactMismatchError : public Error {
 public:
  explicit ArtifactMismatchError(const std::string& msg) : Error(ErrorCode::artifact_mismatch, msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error(ErrorCode::numeric, msg) {}
};

// Pose/corpus file parsing failures, one type per failure mode.
class MalformedHeaderError : public DataError {
 public:
  explicit MalformedHeaderError(const std::string& msg) : DataError(msg) {}
};

class FrameCountError : public DataError {
 public:
  explicit FrameCountError(const std::string& msg) : DataError(msg) {}
};

class JointCountError : public DataError {
 public:
  explicit JointCountError(const std::string& msg) : DataError(msg) {}
};

class NonFiniteValueError : public DataError {
 public:
  explicit NonFiniteValueError(const std::string& msg) : DataError(msg) {}
};

class DegenerateDimensionError : public DataError {
 public:
  explicit DegenerateDimensionError(const std::string& msg) : DataError(msg) {}
};

}  // namespace posecode
