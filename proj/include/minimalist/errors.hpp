#pragma once

#include <stdexcept>

namespace minimalist {

// Numeric procedure failed (diverged training, integration blow-up).
// The CLI maps this to exit code 3.
class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed config or input file. The CLI maps this to exit code 2.
class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace minimalist
