#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cylmart {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument shape, range or grid mismatch.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A path that should be nondecreasing decreases at `index`.
class MonotonicityError : public Error {
public:
    MonotonicityError(std::size_t index, const std::string& what)
        : Error(what + " (first offending index " + std::to_string(index) + ")"), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// A matrix expected to be symmetric is not.
class NotSymmetric : public Error {
public:
    using Error::Error;
};

/// A matrix expected to be positive semidefinite has a negative eigenvalue.
class NotPsd : public Error {
public:
    using Error::Error;
};

/// Picard iteration failed to reach the requested tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Malformed config, report or bundle.
class FormatError : public Error {
public:
    using Error::Error;
};

} // namespace cylmart
