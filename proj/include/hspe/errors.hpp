#pragma once

#include <stdexcept>
#include <string>

namespace hspe {

/// Root of the library's error hierarchy.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad configuration or arguments; the CLI maps this to exit code 2.
struct ValidationError : Error {
    using Error::Error;
};

/// Runtime numerical failure (invariant breach, blow-up, non-finite data);
/// the CLI maps this to exit code 3.
struct NumericalError : Error {
    using Error::Error;
};

}  // namespace hspe
