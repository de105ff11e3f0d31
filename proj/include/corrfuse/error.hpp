#pragma once

#include <stdexcept>
#include <string>

namespace corrfuse {

enum class ErrorKind {
  kInvalidArgument,  // precondition violated by the caller
  kUsage,            // bad command-line input
  kFormat,           // unrecognized file layout
  kCorrupt,          // recognized layout, inconsistent contents
  kValidation,       // well-formed data that breaks a domain invariant
  kIo,
  kRuntime,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kUsage: return "usage";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kCorrupt: return "corrupt";
    case ErrorKind::kValidation: return "validation";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kRuntime: return "runtime";
  }
  return "runtime";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::kInvalidArgument, what);
}

}  // namespace corrfuse
