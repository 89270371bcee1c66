#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "timfg/errors.hpp"
#include "timfg/gibbs.hpp"
#include "timfg/grid.hpp"
#include "timfg/measure_flow.hpp"
#include "timfg/model.hpp"
#include "timfg/parallel.hpp"
#include "timfg/tridiag.hpp"

namespace timfg {

/// One t-slice of the auxiliary value: levels j_s = j_t..n_time by space node.
struct SliceValues {
    int j_t = 0, n_time = 0, n_space = 0;
    std::vector<double> data;

    [[nodiscard]] double* row(int j_s) {
        return data.data() + static_cast<std::size_t>(j_s - j_t) * (n_space + 1);
    }
    [[nodiscard]] const double* row(int j_s) const {
        return data.data() + static_cast<std::size_t>(j_s - j_t) * (n_space + 1);
    }
    [[nodiscard]] double at(int j_s, int i) const {
        if (j_s < j_t || j_s > n_time || i < 0 || i > n_space)
            throw ConfigError("slice values: index out of range");
        return row(j_s)[i];
    }
};

/// Auxiliary value V(t,s,x) on the triangular domain plus its diagonal
/// J(t,x) = V(t,t,x) and the space gradient of the diagonal (centered inside,
/// one-sided second order at the walls).
struct AuxValueField {
    TriangularField<double> values;
    int n_time = 0, n_space = 0;
    std::vector<double> diag, diag_grad;

    [[nodiscard]] std::size_t idx(int j, int i) const {
        return static_cast<std::size_t>(j) * (n_space + 1) + i;
    }
    [[nodiscard]] double J(int j, int i) const { return diag[idx(j, i)]; }
    [[nodiscard]] double DxJ(int j, int i) const { return diag_grad[idx(j, i)]; }

    void rebuild_diagonal(const GridSpec& grid) {
        const int n = n_space;
        diag.assign(static_cast<std::size_t>(n_time + 1) * (n + 1), 0.0);
        diag_grad.assign(diag.size(), 0.0);
        for (int j = 0; j <= n_time; ++j) {
            for (int i = 0; i <= n; ++i) diag[idx(j, i)] = values.at(j, j, i);
            for (int i = 0; i <= n; ++i) {
                double g;
                if (i == 0)
                    g = (-3.0 * J(j, 0) + 4.0 * J(j, 1) - J(j, 2)) / (2.0 * grid.dx);
                else if (i == n)
                    g = (3.0 * J(j, n) - 4.0 * J(j, n - 1) + J(j, n - 2)) / (2.0 * grid.dx);
                else
                    g = (J(j, i + 1) - J(j, i - 1)) / (2.0 * grid.dx);
                diag_grad[idx(j, i)] = g;
            }
        }
    }
};

namespace detail {

/// Backward implicit-Euler sweep for one t-slice of
///   d_s V + (sigma^2/2) D^2_x V + drift_bar D_x V + source = 0,
/// V(n_time) = terminal.  Inside: centered second difference, upwind first
/// difference.  Wall rows drop the second difference and keep only the
/// inward-pointing upwind branch, so every step matrix is an M-matrix with
/// unit row sums: constants are reproduced exactly, and with zero drift so
/// are linear profiles.  source_level(j_s, out) fills the source at the
/// implicit level.
template <typename LevelSourceFn>
void backward_slice(const GridSpec& grid, const PolicyAverages& coeff, int j_t,
                    std::span<const double> terminal, LevelSourceFn&& source_level,
                    SliceValues& out) {
    const int n = grid.n_space;
    out.j_t = j_t;
    out.n_time = grid.n_time;
    out.n_space = n;
    out.data.assign(static_cast<std::size_t>(grid.n_time - j_t + 1) * (n + 1), 0.0);

    std::copy(terminal.begin(), terminal.end(), out.row(grid.n_time));
    std::vector<double> lower(n + 1), diag(n + 1), upper(n + 1), rhs(n + 1), src(n + 1);

    for (int j_s = grid.n_time - 1; j_s >= j_t; --j_s) {
        source_level(j_s, std::span<double>(src));
        const double* vnext = out.row(j_s + 1);
        for (int i = 0; i <= n; ++i) {
            const std::size_t q = coeff.idx(j_s, i);
            const double b = coeff.drift_bar[q];
            const double cd = grid.ds * 0.5 * coeff.sigma_sq[q] / (grid.dx * grid.dx);
            const double cu = grid.ds * std::max(b, 0.0) / grid.dx;
            const double cl = grid.ds * std::max(-b, 0.0) / grid.dx;
            if (i == 0) {
                diag[i] = 1.0 + cu;
                upper[i] = -cu;
                lower[i] = 0.0;
            } else if (i == n) {
                diag[i] = 1.0 + cl;
                lower[i] = -cl;
                upper[i] = 0.0;
            } else {
                diag[i] = 1.0 + 2.0 * cd + cu + cl;
                upper[i] = -(cd + cu);
                lower[i] = -(cd + cl);
            }
            rhs[i] = vnext[i] + grid.ds * src[i];
        }
        solve_tridiagonal(lower, diag, upper, rhs);
        std::copy(rhs.begin(), rhs.end(), out.row(j_s));
    }
}

} // namespace detail

/// Value of the commitment problem started at t-node j_t under the given
/// relaxed policy and frozen flow: running reward keyed by elapsed time,
/// entropy bonus weighted by lambda * discount(elapsed), terminal reward at
/// the slice's own t.
[[nodiscard]] inline SliceValues solve_slice(const ModelSpec& model, const GridSpec& grid,
                                             const RelaxedPolicyField& pi, const MeasureFlow& flow,
                                             double lambda, int j_t,
                                             const PolicyAverages* shared = nullptr) {
    if (!(lambda > 0.0)) throw ConfigError("solve_slice: lambda must be positive");
    if (j_t < 0 || j_t > grid.n_time) throw ConfigError("solve_slice: t-node out of range");
    if (pi.n_time() != grid.n_time || pi.n_space() != grid.n_space || pi.n_action() != grid.n_action)
        throw ConfigError("solve_slice: policy field does not match the grid");

    PolicyAverages local;
    if (!shared) {
        local = policy_averages(model, grid, pi, [&](int j) { return flow.stats_at(j); });
        shared = &local;
    }
    const PolicyAverages& coeff = *shared;
    const double t = grid.ts[j_t];

    std::vector<double> terminal(grid.n_space + 1);
    {
        const MeasureStats mT = flow.stats_at(grid.n_time);
        for (int i = 0; i <= grid.n_space; ++i) {
            terminal[i] = model.terminal_reward(t, grid.xs[i], mT);
            require_finite(terminal[i], "terminal_reward", t, grid.xs[i], 0.0);
        }
    }

    SliceValues out;
    auto source = [&](int j_s, std::span<double> dst) {
        const double tau = grid.ts[j_s] - t;
        const MeasureStats m = flow.stats_at(j_s);
        const double disc = model.discount(tau);
        for (int i = 0; i <= grid.n_space; ++i) {
            const auto p = pi.at(j_s, i);
            double rbar = 0.0;
            for (int k = 0; k <= grid.n_action; ++k)
                rbar += model.running_reward(tau, grid.xs[i], m, grid.as[k]) * p[k] * grid.aw[k];
            require_finite(rbar, "policy-averaged running reward", grid.ts[j_s], grid.xs[i], 0.0);
            dst[i] = rbar + lambda * disc * coeff.entropy_bar[coeff.idx(j_s, i)];
        }
    };
    detail::backward_slice(grid, coeff, j_t, terminal, source, out);
    return out;
}

/// All t-slices of the auxiliary value; slices are independent backward
/// problems and are solved in parallel.
[[nodiscard]] inline AuxValueField solve_all_slices(const ModelSpec& model, const GridSpec& grid,
                                                    const RelaxedPolicyField& pi,
                                                    const MeasureFlow& flow, double lambda) {
    const PolicyAverages coeff =
        policy_averages(model, grid, pi, [&](int j) { return flow.stats_at(j); });
    AuxValueField field;
    field.n_time = grid.n_time;
    field.n_space = grid.n_space;
    field.values = TriangularField<double>(grid.n_time, grid.n_space);
    parallel_for(grid.n_time + 1, [&](std::size_t jt) {
        const int j_t = static_cast<int>(jt);
        SliceValues slice = solve_slice(model, grid, pi, flow, lambda, j_t, &coeff);
        for (int j_s = j_t; j_s <= grid.n_time; ++j_s)
            std::copy(slice.row(j_s), slice.row(j_s) + grid.n_space + 1, field.values.row(j_t, j_s));
    });
    field.rebuild_diagonal(grid);
    return field;
}

/// t-derivative of the auxiliary value: same operator, source
/// -d_tau(running reward averaged) - lambda * discount'(elapsed) * entropy,
/// terminal d_t(terminal reward).  Used for Lipschitz-in-t diagnostics.
[[nodiscard]] inline AuxValueField solve_t_derivative(const ModelSpec& model, const GridSpec& grid,
                                                      const RelaxedPolicyField& pi,
                                                      const MeasureFlow& flow, double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("solve_t_derivative: lambda must be positive");
    const PolicyAverages coeff =
        policy_averages(model, grid, pi, [&](int j) { return flow.stats_at(j); });
    AuxValueField field;
    field.n_time = grid.n_time;
    field.n_space = grid.n_space;
    field.values = TriangularField<double>(grid.n_time, grid.n_space);

    parallel_for(grid.n_time + 1, [&](std::size_t jt) {
        const int j_t = static_cast<int>(jt);
        const double t = grid.ts[j_t];
        std::vector<double> terminal(grid.n_space + 1);
        const MeasureStats mT = flow.stats_at(grid.n_time);
        for (int i = 0; i <= grid.n_space; ++i) {
            terminal[i] = model.d_t_terminal(t, grid.xs[i], mT);
            require_finite(terminal[i], "d_t terminal_reward", t, grid.xs[i], 0.0);
        }
        SliceValues slice;
        auto source = [&](int j_s, std::span<double> dst) {
            const double tau = grid.ts[j_s] - t;
            const MeasureStats m = flow.stats_at(j_s);
            const double ddisc = model.discount_deriv(tau);
            for (int i = 0; i <= grid.n_space; ++i) {
                const auto p = pi.at(j_s, i);
                double drbar = 0.0;
                for (int k = 0; k <= grid.n_action; ++k)
                    drbar += model.d_tau_running(tau, grid.xs[i], m, grid.as[k]) * p[k] * grid.aw[k];
                require_finite(drbar, "policy-averaged d_tau running reward", grid.ts[j_s],
                               grid.xs[i], 0.0);
                dst[i] = -drbar - lambda * ddisc * coeff.entropy_bar[coeff.idx(j_s, i)];
            }
        };
        detail::backward_slice(grid, coeff, j_t, terminal, source, slice);
        for (int j_s = j_t; j_s <= grid.n_time; ++j_s)
            std::copy(slice.row(j_s), slice.row(j_s) + grid.n_space + 1, field.values.row(j_t, j_s));
    });
    field.rebuild_diagonal(grid);
    return field;
}

} // namespace timfg
