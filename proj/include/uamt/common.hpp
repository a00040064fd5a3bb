#pragma once

#include <stdexcept>
#include <string>

namespace uamt {

// Bad or inconsistent configuration / arguments. CLI exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// File missing, unreadable, truncated, or malformed.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/grid shape contract violation.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values or other numerical failure. CLI exit code 3.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Requested metric has no defined value for the given inputs.
struct MetricUndefined : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace uamt
