#pragma once

#include <stdexcept>
#include <string>

namespace qaparse {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A value violates a documented invariant (range, normalization, shape).
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A file does not follow its documented on-disk format.
class FormatError : public Error {
public:
    using Error::Error;
};

/// A file could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

} // namespace qaparse
