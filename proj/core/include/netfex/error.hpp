#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace netfex {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid argument value or inconsistent configuration.
class ParameterError : public Error {
public:
    using Error::Error;
};

/// Input violates an operation's precondition (e.g. disconnected graph).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// Non-finite or overflowing intermediate. `where` is a node or sample index.
class NumericError : public Error {
public:
    NumericError(const std::string& what, std::ptrdiff_t where = -1) : Error(what), where_(where) {}
    std::ptrdiff_t where() const noexcept { return where_; }

private:
    std::ptrdiff_t where_;
};

/// Trajectory exceeded the overflow guard during integration.
class BlowUpError : public Error {
public:
    BlowUpError(const std::string& what, std::size_t step) : Error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

class TooShortError : public Error {
public:
    using Error::Error;
};

class RetriesExhaustedError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed or schema-violating run configuration.
class ConfigError : public ParameterError {
public:
    using ParameterError::ParameterError;
};

} // namespace netfex
