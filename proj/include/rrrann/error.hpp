#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rrrann {

/// Error categories surfaced by the library. The CLI maps these to exit codes.
enum class ErrorKind {
  shape,      // dimension mismatch between operands
  parameter,  // invalid hyperparameter or argument
  data,       // non-finite or otherwise unusable input data
  format,     // malformed file / byte stream
  version,    // well-formed but unsupported file version or layout
  internal,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::data: return "data";
    case ErrorKind::format: return "format";
    case ErrorKind::version: return "version";
    case ErrorKind::internal: return "internal";
  }
  return "internal";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace rrrann
