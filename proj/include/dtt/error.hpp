#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dtt {

// Error categories surfaced to callers. The CLI maps each one to an exit code
// and the service to an HTTP status.
enum class ErrorKind {
  kInput,
  kIo,
  kPrecondition,
  kDegenerate,
  kRegistration,
  kValidation,
  kConflict,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string &message)
      : std::runtime_error(message), kind_{kind} {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

struct InputError : Error {
  explicit InputError(const std::string &m) : Error(ErrorKind::kInput, m) {}
};

struct IoError : Error {
  explicit IoError(const std::string &m) : Error(ErrorKind::kIo, m) {}
};

struct PreconditionError : Error {
  explicit PreconditionError(const std::string &m)
      : Error(ErrorKind::kPrecondition, m) {}
};

struct DegenerateError : Error {
  explicit DegenerateError(const std::string &m)
      : Error(ErrorKind::kDegenerate, m) {}
};

struct ValidationError : Error {
  explicit ValidationError(const std::string &m)
      : Error(ErrorKind::kValidation, m) {}
};

struct ConflictError : Error {
  explicit ConflictError(const std::string &m)
      : Error(ErrorKind::kConflict, m) {}
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput: return "input";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kDegenerate: return "degenerate";
    case ErrorKind::kRegistration: return "registration";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kConflict: return "conflict";
  }
  return "unknown";
}

}  // namespace dtt
