#pragma once

#include <stdexcept>
#include <string>

namespace mtsconv {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor extents, ranks or axes that do not fit the operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Out-of-domain scalar argument (non-positive factor, zero length, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

// Dataset content problems: bad labels, missing cache entries, zero variance.
class DataError : public Error {
public:
    using Error::Error;
};

// Malformed on-disk content (WAV, tensor dumps, checkpoints, results).
class FormatError : public Error {
public:
    using Error::Error;
};

// Operation invoked in the wrong object state (backward before forward, ...).
class StateError : public Error {
public:
    using Error::Error;
};

// Bad command-line usage or missing input files; maps to exit code 2.
class UsageError : public Error {
public:
    using Error::Error;
};

}  // namespace mtsconv
