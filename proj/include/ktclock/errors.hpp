#ifndef KTCLOCK_ERRORS_HPP
#define KTCLOCK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace ktclock {

// Instance too large for exact treatment (quantum state or full enumeration).
struct SizeGuardError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Estimator asked to produce a value from an empty or degenerate sample.
struct InsufficientDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Nonlinear fit did not converge or the model is unidentifiable on the data.
struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A requested (d, L, observable) series is absent from a result store.
struct MissingSeriesError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid simulation or sweep configuration.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace ktclock

#endif
