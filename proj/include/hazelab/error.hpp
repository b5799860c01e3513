#pragma once

#include <stdexcept>
#include <string>

namespace hazelab {

// Root of the library's exception hierarchy. The CLI maps each subclass to an
// exit code: ConfigError/ShapeError -> 2, IoError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Tensor or image dimensions that violate an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid configuration or argument value. The message starts with the
// offending field path (e.g. "haze.beta: ...") when one exists.
class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite values or a violated numeric precondition.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace hazelab
