#pragma once

#include <stdexcept>
#include <string>

namespace bzsl {

// Invalid input: malformed files, bad configuration, violated preconditions.
// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure: non-PD scale matrix, non-positive degrees of freedom,
// non-finite intermediate. The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr double kPi = 3.14159265358979323846;

}  // namespace bzsl
