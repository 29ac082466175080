#pragma once

#include <stdexcept>
#include <string>

namespace epu {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad input data or configuration (maps to CLI exit code 1).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// File system or transport failure (maps to CLI exit code 2).
class IoError : public Error {
public:
    using Error::Error;
};

/// The scoring endpoint answered with something that violates the wire contract.
class ProtocolError : public Error {
public:
    using Error::Error;
};

} // namespace epu
