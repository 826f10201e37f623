#pragma once

#include <stdexcept>
#include <string>

namespace urbanemu {

/// Input outside the domain of a physical conversion.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Quantity undefined for the given inputs (e.g. albedo at night, nMAE of a zero-mean truth).
class UndefinedValueError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or invalid input file.
class LoadError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Dataset protocol violation (empty split, constant feature, too few rows).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Feature order / width mismatch between data, model and host.
class SchemaError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Slab model produced a non-finite or out-of-bounds state.
class IntegrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite gradients or losses during training.
class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Emulator step produced a non-finite or out-of-bounds prediction.
class StepError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace urbanemu
