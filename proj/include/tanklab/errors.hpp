#pragma once

#include <stdexcept>
#include <string>

namespace tanklab {

/// Base class for all tanklab failures.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Invalid value fed to a pure operation (non-finite state, bad range, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Numerical integration produced a non-finite or escaping state.
class IntegrationError : public Error {
public:
    IntegrationError(const std::string& msg, double time, long step)
        : Error(msg + " (t=" + std::to_string(time) + ", step=" + std::to_string(step) + ")"),
          time_(time),
          step_(step) {}

    double time() const { return time_; }
    long step() const { return step_; }

private:
    double time_;
    long step_;
};

/// Tensor shape disagreement, reported with node/op diagnostics.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Operation invoked out of order (e.g. backward before any forward pass).
class StateError : public Error {
public:
    using Error::Error;
};

/// Optimizer received a non-finite gradient or diverged.
class OptimizerError : public Error {
public:
    using Error::Error;
};

/// File content does not match the expected schema (header, column, row).
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Run configuration violates the documented schema.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A pipeline stage requires an artifact that has not been produced yet.
class MissingInputError : public Error {
public:
    using Error::Error;
};

/// Filesystem-level failure.
class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace tanklab
