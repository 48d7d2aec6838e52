#pragma once

#include <stdexcept>
#include <string>

namespace extctl {

/// Base for every failure raised by the numerical routines.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Coefficients diverged: complete or quasi-complete separation.
class SeparationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Information matrix (or Hessian) is not invertible.
class SingularError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class NonConvergence : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// A treatment arm needed by an estimator has no patients.
class DegenerateArm : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Input data is malformed (bad CSV, schema mismatch, invalid values).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
public:
    using DataError::DataError;
};

class SchemaError : public DataError {
public:
    using DataError::DataError;
};

class ValueError : public DataError {
public:
    using DataError::DataError;
};

/// Invalid run configuration.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace extctl
