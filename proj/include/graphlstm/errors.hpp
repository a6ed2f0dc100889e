#pragma once

#include <stdexcept>
#include <string>

namespace glstm {

// Exception hierarchy. The CLI maps each family onto a stable exit code:
// UsageError -> 1, DataError / DimensionError -> 2, NumericError -> 3.

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (CSV contents, missing countries, bad config values).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor or layer shapes that do not line up.
class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite values or undefined quantities (zero denominators) during computation.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace glstm
