#pragma once

#include <stdexcept>
#include <string>

namespace oblab {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Mismatched grids, meshes or shapes; arguments outside an operator's domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Bad experiment or solver configuration (including time-step stability).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// A problem failed validation; the message names the failed checks.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// A coefficient map produced a non-finite value.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// The time march produced a non-finite state.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& what, std::size_t step)
        : Error(what), step_(step) {}
    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace oblab
