#pragma once

#include <stdexcept>
#include <string>

namespace videofusion {

// The three failure families map onto distinct CLI exit codes (2, 3, 4).

/// Invalid configuration, flags, or parameters.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// Missing, malformed, or mismatched input data.
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite values during training or evaluation.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace videofusion
