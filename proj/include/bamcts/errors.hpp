#pragma once

#include <stdexcept>
#include <string>

namespace bamcts {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid hyperparameters, flags, or sizes.
struct ConfigError : Error {
    using Error::Error;
};

// Dimension mismatch between a value and the shape an operation expects.
struct ShapeError : Error {
    using Error::Error;
};

// NaN/inf in a loss, gradient or input.
struct NumericError : Error {
    using Error::Error;
};

// Malformed or non-finite data records, bad files.
struct DataError : Error {
    using Error::Error;
};

// Violated precondition (e.g. a belief that is not a simplex).
struct ContractError : Error {
    using Error::Error;
};

// Enumeration budget exceeded.
struct CapacityError : Error {
    using Error::Error;
};

}  // namespace bamcts
