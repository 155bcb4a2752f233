#pragma once

#include <stdexcept>
#include <string>

namespace gt {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Inputs violate a precondition (divisibility, ranges, counts).
struct RejectedParameters : Error {
    using Error::Error;
};

// Randomized construction exhausted its retry budget.
struct ConstructionFailure : Error {
    using Error::Error;
};

struct DimensionMismatch : Error {
    using Error::Error;
};

// A normalizer or integral evaluated to zero / non-finite; the message
// names the offending edge, patient or term.
struct NumericalDegeneracy : Error {
    using Error::Error;
};

// Operation refused because its cost would be prohibitive (e.g. exhaustive
// enumeration above the size cap).
struct CostGuard : Error {
    using Error::Error;
};

struct InsufficientSamples : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

} // namespace gt
