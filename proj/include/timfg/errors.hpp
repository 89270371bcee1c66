#pragma once

#include <stdexcept>
#include <string>

namespace timfg {

/// Bad run parameters or structurally inconsistent inputs: grid mismatches,
/// nonpositive temperatures, out-of-range indices, malformed config files.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

/// A user-supplied coefficient returned a non-finite value.  The message names
/// the offending coefficient and the evaluation point.
class ModelError : public std::runtime_error {
public:
    explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

/// A solver left its validity envelope: singular tridiagonal pivot, mass
/// drift beyond tolerance, negative density beyond rounding noise.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// An input density failed a precondition (negative entries, mass far from 1).
class DensityError : public std::runtime_error {
public:
    explicit DensityError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace timfg
