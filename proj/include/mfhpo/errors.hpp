#pragma once

#include <stdexcept>
#include <string>

namespace mfhpo {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid spaces, configs, or experiment definitions.
struct ConfigError : Error {
    using Error::Error;
};

// A component was driven outside its contract (duplicate report, unknown trial, ...).
struct ProtocolError : Error {
    using Error::Error;
};

// Malformed or inconsistent data files.
struct DataError : Error {
    using Error::Error;
};

// Linear algebra gave up (e.g. Cholesky failed after jitter escalation).
struct NumericsError : Error {
    using Error::Error;
};

}  // namespace mfhpo
