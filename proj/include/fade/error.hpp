#pragma once

#include <stdexcept>
#include <string>

namespace fade {

/// Broad error classes. The numeric values double as CLI exit codes.
enum class ErrorKind : int {
  Io = 3,
  Parse = 4,
  DanglingEntity = 5,
  InvalidArgument = 6,
  Shortfall = 7,
  EmptyGrounding = 8,
  UnknownEntity = 9,
  LengthMismatch = 10,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Io: return "io";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::DanglingEntity: return "dangling-entity";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::Shortfall: return "shortfall";
    case ErrorKind::EmptyGrounding: return "empty-grounding";
    case ErrorKind::UnknownEntity: return "unknown-entity";
    case ErrorKind::LengthMismatch: return "length-mismatch";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

}  // namespace fade
