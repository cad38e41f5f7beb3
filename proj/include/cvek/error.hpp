#pragma once

#include <stdexcept>
#include <string>

namespace cvek {

/// Bad arguments, unknown names, malformed configuration.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Problems with user-supplied data (missing columns, non-numeric cells, constant features).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Degenerate or failed numerical computation.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace cvek
