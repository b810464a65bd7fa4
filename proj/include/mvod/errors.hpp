#pragma once

#include <stdexcept>

namespace mvod {

// Shape/precondition violations on library entry points.
struct ContractViolation : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Bad user-supplied configuration or input files. CLI exit code 1.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Non-finite values produced during training or scoring. CLI exit code 2.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace mvod
