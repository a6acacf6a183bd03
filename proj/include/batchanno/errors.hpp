#ifndef BATCHANNO_ERRORS_HPP
#define BATCHANNO_ERRORS_HPP

#include <stdexcept>
#include <string>

/**
 * @file errors.hpp
 *
 * @brief Exception types raised by the toolkit.
 *
 * Every error derives from `batchanno::Error`, so callers that only care
 * about success/failure can catch the base class. The CLI maps the
 * `DataError` and `UsageError` branches onto distinct exit codes.
 */

namespace batchanno {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad arguments or configuration (CLI exit code 2).
class UsageError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data (CLI exit code 3).
class DataError : public Error {
public:
    using Error::Error;
};

/// Network failure talking to a generator endpoint (CLI exit code 4).
class TransportError : public Error {
public:
    using Error::Error;
};

class InputNotFound : public UsageError {
public:
    explicit InputNotFound(const std::string& path) : UsageError("input not found: " + path) {}
};

class EmptyProfile : public DataError {
public:
    EmptyProfile() : DataError("expression profile is empty") {}
};

class InvalidRange : public UsageError {
public:
    using UsageError::UsageError;
};

class RejectedInstance : public DataError {
public:
    using DataError::DataError;
};

class WriteError : public Error {
public:
    explicit WriteError(const std::string& path) : Error("failed to write " + path), path_(path) {}
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

class IndexError : public UsageError {
public:
    using UsageError::UsageError;
};

/// A function was called with inputs violating its documented precondition.
class ContractViolation : public Error {
public:
    using Error::Error;
};

class EmptyCorpus : public DataError {
public:
    EmptyCorpus() : DataError("corpus is empty") {}
};

class GroupTooSmall : public UsageError {
public:
    using UsageError::UsageError;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class TooLarge : public UsageError {
public:
    using UsageError::UsageError;
};

/// Missing or rejected credentials; never retried.
class AuthError : public TransportError {
public:
    using TransportError::TransportError;
};

} // namespace batchanno

#endif
