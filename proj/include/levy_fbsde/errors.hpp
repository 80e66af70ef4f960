#pragma once

#include <stdexcept>
#include <string>

namespace levy_fbsde {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid model, grid, or solver input (bad ranges, inconsistent sizes).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// The measure x^2 nu(dx) + a^2 delta_0(dx) supports fewer orthonormal
/// polynomials than requested.
class DegenerateMeasure : public Error {
public:
    DegenerateMeasure(const std::string& what, int max_feasible_order)
        : Error(what), max_feasible_order_(max_feasible_order) {}

    int max_feasible_order() const noexcept { return max_feasible_order_; }

private:
    int max_feasible_order_;
};

/// Chaos order of a problem does not match the basis it is paired with.
class BasisMismatch : public Error {
public:
    using Error::Error;
};

/// Fixed-point iteration failed even after interval splitting.
class NoConvergence : public Error {
public:
    using Error::Error;
};

/// A jump displacement is too large for the truncated spatial domain.
class GridTooSmall : public Error {
public:
    using Error::Error;
};

/// The volatility rows of a market cannot identify a portfolio from Z.
class RankDeficientVolatility : public Error {
public:
    using Error::Error;
};

}  // namespace levy_fbsde
