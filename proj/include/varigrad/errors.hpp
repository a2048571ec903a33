#pragma once

#include <stdexcept>
#include <string>

namespace varigrad {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define VARIGRAD_ERROR_TYPE(Name)        \
    class Name : public Error {          \
    public:                              \
        using Error::Error;              \
    }

/// Incompatible matrix dimensions.
VARIGRAD_ERROR_TYPE(ShapeError);
/// Argument outside the mathematical domain of an operation.
VARIGRAD_ERROR_TYPE(DomainError);
/// Violation of the alpha <= 1 constraint on dropout posteriors.
VARIGRAD_ERROR_TYPE(ConstraintError);
/// Invalid or inconsistent configuration (mode/noise pairing, config file fields).
VARIGRAD_ERROR_TYPE(ConfigError);
/// Malformed file contents (bad magic, bad checkpoint header).
VARIGRAD_ERROR_TYPE(FormatError);
/// Two inputs that must agree do not (image/label counts, label range).
VARIGRAD_ERROR_TYPE(ConsistencyError);
/// Files that are missing or cannot be read in full.
VARIGRAD_ERROR_TYPE(IoError);
/// Non-finite gradient handed to the optimizer.
VARIGRAD_ERROR_TYPE(OptimizerError);
/// Not enough samples for a statistic.
VARIGRAD_ERROR_TYPE(StatisticsError);
/// Numeric blow-up during training.
VARIGRAD_ERROR_TYPE(NumericError);

#undef VARIGRAD_ERROR_TYPE

}  // namespace varigrad
