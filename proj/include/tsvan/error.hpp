#pragma once

#include <stdexcept>
#include <string>

namespace tsvan {

// Bad shapes, out-of-range arguments, malformed configs. The CLI maps these
// to exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Filesystem and container-format failures. The CLI maps these to exit code 2.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised by the trainer when a loss term stops being finite.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tsvan
