#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ws3d {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

/// Malformed binary or text container. Carries the byte offset at which
/// decoding failed.
class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t offset);
    std::size_t offset() const noexcept { return m_offset; }

private:
    std::size_t m_offset;
};

class UnsupportedVersionError : public FormatError {
public:
    UnsupportedVersionError(unsigned found, unsigned expected);
};

class NumericError : public Error {
public:
    using Error::Error;
};

class UsageError : public Error {
public:
    using Error::Error;
};

class SupervisionError : public Error {
public:
    using Error::Error;
};

class BehindCameraError : public Error {
public:
    using Error::Error;
};

class OracleError : public Error {
public:
    using Error::Error;
};

class DivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace ws3d
