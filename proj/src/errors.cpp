#include "twin/errors.hpp"

namespace twin {

int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage:
    case ErrorKind::index_range:
      return 2;
    case ErrorKind::config_mismatch:
      return 4;
    case ErrorKind::data:
    case ErrorKind::zero_variance:
    case ErrorKind::degenerate_normalizer:
    case ErrorKind::io:
      return 3;
  }
  return 1;
}

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::usage: return "usage";
    case ErrorKind::data: return "data";
    case ErrorKind::config_mismatch: return "config_mismatch";
    case ErrorKind::index_range: return "index_range";
    case ErrorKind::zero_variance: return "zero_variance";
    case ErrorKind::degenerate_normalizer: return "degenerate_normalizer";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

}  // namespace twin
