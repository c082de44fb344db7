#pragma once

#include <stdexcept>
#include <string>

namespace dcd {

// Error taxonomy; the CLI maps these onto distinct exit codes.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Operand dimensions do not line up.
struct ShapeError : Error {
    using Error::Error;
};

// A non-finite value reached an operation that requires finite input/output.
struct NumericError : Error {
    using Error::Error;
};

// Invalid configuration (bad hyperparameter, inconsistent flags, sizes).
struct ConfigError : Error {
    using Error::Error;
};

// On-disk data does not conform to the expected file format.
struct DataFormatError : Error {
    using Error::Error;
};

// An operation was called in a way its contract forbids (empty batch, wrong arity).
struct UsageError : Error {
    using Error::Error;
};

// Filesystem failure (missing file, short write).
struct IoError : Error {
    using Error::Error;
};

}  // namespace dcd
