#pragma once

#include <stdexcept>
#include <string>

namespace uld {

// Root of all library errors. Subclasses map 1:1 onto CLI exit codes
// (see tools/uld_main.cpp).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad or inconsistent configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

// File system / serialization failures. Messages carry the offending
// path and, for parsers, a line or byte position.
class IoError : public Error {
public:
    using Error::Error;
};

// Training loss became non-finite.
class DivergenceError : public Error {
public:
    using Error::Error;
};

// Tensor/landmark-count mismatch between inputs that must agree.
class ShapeError : public Error {
public:
    using Error::Error;
};

// A matrix that must be positive definite is not.
class DefinitenessError : public Error {
public:
    using Error::Error;
};

// Activated heatmap mass too small to take a weighted mean.
class DegenerateHeatmapError : public Error {
public:
    using Error::Error;
};

// Statistics requested over too few samples.
class InsufficientSamplesError : public Error {
public:
    using Error::Error;
};

// Gradient audit exceeded its tolerance.
class AuditError : public Error {
public:
    using Error::Error;
};

}  // namespace uld
