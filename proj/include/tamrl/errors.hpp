#pragma once

#include <stdexcept>

namespace tamrl {

// Bad input data or configuration (CLI exit code 3).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace tamrl
