#include "mmm/error.hpp"

namespace mmm {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::shape:
      return "shape";
    case ErrorKind::value:
      return "value";
    case ErrorKind::io:
      return "io";
    case ErrorKind::format:
      return "format";
    case ErrorKind::state:
      return "state";
    case ErrorKind::diverged:
      return "diverged";
  }
  return "unknown";
}

Error::Error(ErrorKind kind, std::string where, const std::string& detail)
    : std::runtime_error(where + ": " + detail + " [" + to_string(kind) + "]"), kind_(kind), where_(std::move(where)) {}

}  // namespace mmm
