#pragma once

#include <stdexcept>
#include <string>

namespace mmm {

enum class ErrorKind {
  shape,     // tensor dimensions do not conform
  value,     // argument outside its documented domain
  io,        // file could not be opened / written
  format,    // malformed file content
  state,     // operation invoked in an invalid state (missing checkpoint, ...)
  diverged,  // training produced a non-finite loss
};

const char* to_string(ErrorKind kind) noexcept;

/// Structured error carrying the failing operation and a category.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string where, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& where() const noexcept { return where_; }

 private:
  ErrorKind kind_;
  std::string where_;
};

}  // namespace mmm
