#ifndef VOXNAS_ERRORS_HPP
#define VOXNAS_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace voxnas {

/// Bad run configuration (unknown keys, invalid values). CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Unreadable, malformed, or inconsistent input data. CLI exit code 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numeric failure during optimization (NaN loss etc.). CLI exit code 4.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace voxnas

#endif  // VOXNAS_ERRORS_HPP
