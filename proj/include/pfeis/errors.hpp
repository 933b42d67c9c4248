#pragma once

#include <stdexcept>
#include <string>

namespace pfeis {

// Invalid or inconsistent user input (CLI exit code 2).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values, failed factorizations and the like (CLI exit code 3).
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace pfeis
