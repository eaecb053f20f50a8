#pragma once

#include <stdexcept>
#include <string>

namespace rili {

// Base for all errors raised by the library.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments, violated invariants, malformed configuration.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

// Filesystem / serialization failures.
class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// A file exists but its bytes do not match the declared container layout.
class FormatError : public IoError {
public:
    explicit FormatError(const std::string& msg) : IoError(msg) {}
};

} // namespace rili
