#pragma once

#include <stdexcept>
#include <string>

namespace spdist {

// Base of every error the library throws. The CLI maps the subclasses onto
// exit codes, so new error kinds should derive from one of the three classes
// below rather than from Error directly.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad user configuration (config files, flags, phantom geometry).
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed input files.
class SchemaError : public Error {
public:
    using Error::Error;
};

// Numerical failures: invalid tensors, singular designs, bad dof.
class NumericalError : public Error {
public:
    using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
public:
    NotPositiveDefinite() : NumericalError("matrix is not positive definite") {}
    explicit NotPositiveDefinite(const std::string& what) : NumericalError(what) {}
};

class InvalidDof : public NumericalError {
public:
    explicit InvalidDof(double k)
        : NumericalError("Wishart degrees of freedom must exceed 2, got " + std::to_string(k)) {}
};

class RankDeficientDesign : public NumericalError {
public:
    explicit RankDeficientDesign(int rank)
        : NumericalError("gradient design has rank " + std::to_string(rank) + " < 6") {}
};

class SeedOutOfBounds : public ConfigError {
public:
    using ConfigError::ConfigError;
};

} // namespace spdist
