#pragma once

#include <stdexcept>
#include <string>

namespace twin {

enum class ErrorKind {
  usage,                  // invalid parameters or flags
  data,                   // malformed or non-finite input
  config_mismatch,        // quantile table or snapshot does not match the configuration
  index_range,            // window / monitoring index outside the admissible set
  zero_variance,          // a scale estimate is zero
  degenerate_normalizer,  // V_N == 0, self-normalized monitoring cannot start
  io,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// CLI exit codes: 2 usage, 3 data, 4 config/table mismatch.
int exit_code(ErrorKind kind) noexcept;

const char* to_string(ErrorKind kind) noexcept;

}  // namespace twin
