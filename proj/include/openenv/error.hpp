#pragma once

#include <stdexcept>
#include <string>

namespace openenv {

// Invalid configuration or inconsistent arguments (CLI exit code 2).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed, missing or degenerate data (CLI exit code 3).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public DataError {
public:
    ConvergenceError(const std::string& what, double residual)
        : DataError(what), residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

}  // namespace openenv
