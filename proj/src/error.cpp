#include "mbps/error.hpp"

namespace mbps {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::input: return "input";
    case ErrorKind::config: return "config";
    case ErrorKind::domain: return "domain";
    case ErrorKind::numerical: return "numerical";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config: return 2;
    case ErrorKind::input: return 3;
    case ErrorKind::domain: return 4;
    case ErrorKind::numerical: return 5;
    case ErrorKind::io: return 6;
  }
  return 1;
}

}  // namespace mbps
