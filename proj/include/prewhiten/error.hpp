#pragma once

#include <stdexcept>
#include <string>

namespace prewhiten {

/// Exit codes used by the CLI; library errors map onto them 1:1.
enum class ExitCode : int {
    ok = 0,
    config_error = 2,
    data_error = 3,
    numeric_error = 4,
};

/// Invalid configuration: bad flag values, inconsistent options, missing files.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent input data (file contents, dimensions, values).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Numeric failure: eigendecomposition breakdown, non-finite intermediate, ...
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace prewhiten
