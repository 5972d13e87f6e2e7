#pragma once

#include <stdexcept>
#include <string>

namespace onebit {

/// Root of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

/// A label-protocol rule was violated (e.g. guessing a sample outside the pool).
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// A sample was queried a second time.
class OnceOnlyViolation : public ProtocolError {
public:
    using ProtocolError::ProtocolError;
};

class BudgetExhausted : public Error {
public:
    using Error::Error;
};

class InsufficientPool : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

class TrainingDiverged : public Error {
public:
    using Error::Error;
};

/// Invalid configuration; `field()` names the offending key when known.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace onebit
