#pragma once

#include <cmath>
#include <vector>

#include "timfg/errors.hpp"

namespace timfg {

/// Thomas algorithm for a tridiagonal system (lower, diag, upper, rhs), all
/// of length n with lower[0] and upper[n-1] unused.  The solvers only build
/// strictly diagonally dominant systems, so no pivoting is needed; a tiny
/// pivot still raises a numeric error rather than dividing through.
inline void solve_tridiagonal(std::vector<double>& lower, std::vector<double>& diag,
                              std::vector<double>& upper, std::vector<double>& rhs) {
    const std::size_t n = diag.size();
    if (lower.size() != n || upper.size() != n || rhs.size() != n)
        throw ConfigError("solve_tridiagonal: band lengths differ");
    for (std::size_t i = 1; i < n; ++i) {
        if (std::abs(diag[i - 1]) < 1e-300)
            throw NumericError("solve_tridiagonal: vanishing pivot");
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if (std::abs(diag[n - 1]) < 1e-300)
        throw NumericError("solve_tridiagonal: vanishing pivot");
    rhs[n - 1] /= diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) rhs[i] = (rhs[i] - upper[i] * rhs[i + 1]) / diag[i];
}

} // namespace timfg
