#pragma once

#include <stdexcept>
#include <string>

namespace bmsfem {

/// Invalid user input: grid sizes, config keys, out-of-range parameters.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input files.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Solver breakdown: singular systems, failed factorizations, stability violations.
class NumericsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bmsfem
