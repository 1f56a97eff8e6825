#pragma once

#include <stdexcept>
#include <string>

namespace psg {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Array dimensions do not line up for the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration or flag combination (CLI exit code 2).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Corrupt or incompatible file content (CLI exit code 1).
class FormatError : public Error {
public:
    using Error::Error;
};

/// Scene synthesis could not satisfy its constraints.
class GenerationError : public Error {
public:
    using Error::Error;
};

/// Training-time failure (non-finite loss, contract violation).
class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace psg
