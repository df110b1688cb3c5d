#pragma once

#include <stdexcept>
#include <string>

namespace cpcfl {

// Error taxonomy used across the library. The CLI maps ConfigError (and bad
// usage) to exit code 2 and everything else to exit code 1.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor/layer shape disagreements.
struct DimensionError : Error {
    using Error::Error;
};

// Contract violations on values (row sums, label ranges, nonpositive dims...).
struct ValidationError : Error {
    using Error::Error;
};

// API called out of order (e.g. backward without a prior train-mode forward).
struct StateError : Error {
    using Error::Error;
};

// Malformed binary inputs: IDX files, dataset containers, checkpoints.
struct FormatError : Error {
    using Error::Error;
};

// Partitioner ran out of samples for a class.
struct CapacityError : Error {
    using Error::Error;
};

// Filesystem-level failures.
struct IoError : Error {
    using Error::Error;
};

// Invalid or inconsistent run configuration (CLI exit code 2).
struct ConfigError : Error {
    using Error::Error;
};

}  // namespace cpcfl
