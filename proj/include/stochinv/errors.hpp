#pragma once

#include <stdexcept>
#include <string>

namespace stochinv {

/// Non-finite or out-of-range values produced during integration or sampling.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two-body state entered the exclusion radius around the origin.
class SingularityError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Invalid scenario file or command-line options.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace stochinv
