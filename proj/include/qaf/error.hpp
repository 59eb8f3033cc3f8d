#pragma once

#include <stdexcept>
#include <string>

namespace qaf {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Operand shapes do not conform for a primitive.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A forward value or gradient became NaN/Inf.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// Malformed or corrupt file, bad magic/version/CRC.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration document or value.
class ConfigError : public Error {
public:
    using Error::Error;
};

} // namespace qaf
