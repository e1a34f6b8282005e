#pragma once

#include <stdexcept>
#include <string>

namespace tensorcalc {

enum class ErrorCode {
  DuplicateIndex,
  BadOutputIndex,
  DimMismatch,
  NonInjectiveRename,
  SyntaxError,
  UnknownIdentifier,
  UnknownVariable,
  UnknownOutput,
  UnregisteredUnaryOp,
  MissingBinding,
  NotCompressible,
  InvalidArgument,
  FormatError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DuplicateIndex: return "DuplicateIndex";
    case ErrorCode::BadOutputIndex: return "BadOutputIndex";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NonInjectiveRename: return "NonInjectiveRename";
    case ErrorCode::SyntaxError: return "SyntaxError";
    case ErrorCode::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::UnknownOutput: return "UnknownOutput";
    case ErrorCode::UnregisteredUnaryOp: return "UnregisteredUnaryOp";
    case ErrorCode::MissingBinding: return "MissingBinding";
    case ErrorCode::NotCompressible: return "NotCompressible";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FormatError: return "FormatError";
  }
  return "Unknown";
}

// All library failures are reported through this exception type; the code
// lets callers (and tests) distinguish the failure class.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Parse failures carry a 1-based source position.
class SyntaxError : public Error {
 public:
  SyntaxError(const std::string& message, int line, int column)
      : Error(ErrorCode::SyntaxError,
              message + " at line " + std::to_string(line) + ", column " + std::to_string(column)),
        line_(line),
        column_(column) {}

  int line() const noexcept { return line_; }
  int column() const noexcept { return column_; }

 private:
  int line_;
  int column_;
};

}  // namespace tensorcalc
