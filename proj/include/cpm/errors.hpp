#pragma once

#include <stdexcept>
#include <string>

namespace cpm {

// Raised when a covariance matrix fails positivity (negative discriminant etc).
struct InvalidStateError : std::domain_error {
    using std::domain_error::domain_error;
};

// Raised when a state lies below the Heisenberg floor (A < 1) where a
// quantum state is required.
struct InvalidQuantumStateError : std::domain_error {
    using std::domain_error::domain_error;
};

// No steady state exists for the requested parameters (phi = pi/2, 3pi/2).
struct NoSteadyStateError : std::domain_error {
    using std::domain_error::domain_error;
};

// Adaptive integration failed (step underflow, non-finite values, step budget).
struct IntegrationError : std::runtime_error {
    double time;
    IntegrationError(const std::string& what, double t)
        : std::runtime_error(what + " at t=" + std::to_string(t)), time(t) {}
};

// Stochastic stepping produced a non-finite state.
struct SimulationError : std::runtime_error {
    std::size_t step;
    SimulationError(const std::string& what, std::size_t k)
        : std::runtime_error(what + " at step " + std::to_string(k)), step(k) {}
};

// U(t) in the Reid linearization is (numerically) singular.
struct NearSingularError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A measurement record does not match the model it is replayed against.
struct IncompatibleRecordError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Scenario configuration failed validation; `key` names the offending field.
struct ConfigError : std::invalid_argument {
    std::string key;
    ConfigError(const std::string& k, const std::string& what)
        : std::invalid_argument("config key '" + k + "': " + what), key(k) {}
};

// A produced state violated an invariant that the run promised to maintain.
struct AdmissibilityViolation : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace cpm
