#pragma once

#include <stdexcept>
#include <string>

namespace hrge {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes (usage = 2, data = 3, numeric = 4).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Operand dimensions disagree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid model geometry, optimizer state, variant name or similar setting.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed, truncated or inconsistent input data.
class DataError : public Error {
public:
    using Error::Error;
};

// Non-finite values during training or a failed numerical check.
class NumericError : public Error {
public:
    using Error::Error;
};

// backward() invoked on a trace that was already consumed.
class StaleCacheError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

class LabelError : public Error {
public:
    using Error::Error;
};

} // namespace hrge
