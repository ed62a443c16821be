#pragma once

#include <stdexcept>
#include <string>

namespace afl {

// Bad arguments or a malformed configuration. CLI exit code 2.
struct InvalidInput : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Missing files, size mismatches, non-binary masks. CLI exit code 3.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite loss or gradient during evaluation or training. CLI exit code 4.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace afl
