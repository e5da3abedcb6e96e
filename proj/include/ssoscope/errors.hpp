#pragma once

#include <stdexcept>
#include <string>

namespace ssoscope {

// Base class for everything thrown by this library.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad inputs: malformed files, inconsistent dimensions, invalid options.
// The CLI maps these to exit code 2.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A well-formed computation that failed numerically: diverged power flow,
// ill-posed feedback loop, evaluation at a pole, defective spectra.
// The CLI maps these to exit code 3.
struct NumericalError : Error {
    explicit NumericalError(const std::string& msg) : Error(msg) {}
};

// The nonlinear bench left the small-signal regime (current limit hit).
struct NonlinearExcursion : NumericalError {
    explicit NonlinearExcursion(const std::string& msg) : NumericalError(msg) {}
};

}  // namespace ssoscope
