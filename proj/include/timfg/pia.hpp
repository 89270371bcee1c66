#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "timfg/errors.hpp"
#include "timfg/gibbs.hpp"
#include "timfg/grid.hpp"
#include "timfg/measure_flow.hpp"
#include "timfg/model.hpp"
#include "timfg/value_pde.hpp"
#include "timfg/verify.hpp"

namespace timfg {

/// One iterate of the policy improvement map: a policy, the value field it
/// induces against the frozen flow, and the flow it transports.
struct PiaState {
    RelaxedPolicyField pi;
    AuxValueField value;
    MeasureFlow flow;
    double lambda = 0.0;
    int iteration = 0;
};

struct PiaIterationRow {
    int k = 0;
    double value_gap = 0.0; ///< max |J_k - J_{k-1}| + max |DxJ_k - DxJ_{k-1}| on the diagonal
    double flow_gap = 0.0;  ///< flow distance between consecutive density flows
    double ratio = std::numeric_limits<double>::quiet_NaN(); ///< gap_k / gap_{k-1}, from k = 2
    double seconds = 0.0;
};

struct ConvergenceReport {
    std::vector<PiaIterationRow> rows;
    bool converged = false;
    int iterations = 0;
    double final_gap = std::numeric_limits<double>::infinity();
    double tol = 0.0;
    double lambda = 0.0;
};

struct PiaResult {
    PiaState state;
    ConvergenceReport report;
};

/// Zero value field, uniform policy, and the initial density copied to every
/// time node.  The flow's first density stays fixed across iterations, so the
/// initial condition travels with the state.
[[nodiscard]] inline PiaState initial_pia_state(const ModelSpec& model, const GridSpec& grid,
                                                std::span<const double> initial_density,
                                                double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("initial_pia_state: lambda must be positive");
    (void)model;
    PiaState state;
    state.pi = RelaxedPolicyField::uniform(grid);
    state.value.values = TriangularField<double>(grid.n_time, grid.n_space);
    state.value.n_time = grid.n_time;
    state.value.n_space = grid.n_space;
    state.value.rebuild_diagonal(grid);
    state.flow = MeasureFlow::constant(grid, initial_density);
    state.lambda = lambda;
    state.iteration = 0;
    return state;
}

namespace detail {

inline void regenerate_policy(const ModelSpec& model, const GridSpec& grid, PiaState& state) {
    for (int j = 0; j <= grid.n_time; ++j) {
        const MeasureStats m = state.flow.stats_at(j);
        for (int i = 0; i <= grid.n_space; ++i) {
            gibbs_policy(model, grid, grid.ts[j], grid.xs[i], state.value.DxJ(j, i), m,
                         state.lambda, state.pi.at(j, i));
        }
    }
}

} // namespace detail

/// One application of the improvement map.  The incoming flow is frozen for
/// the whole step: the refreshed policy, the value re-solve, and the density
/// transport all read measure arguments from it, and only the returned state
/// carries the transported flow.
[[nodiscard]] inline PiaState phi_step(const ModelSpec& model, const GridSpec& grid,
                                       const PiaState& state) {
    PiaState next;
    next.lambda = state.lambda;
    next.iteration = state.iteration + 1;
    next.pi = RelaxedPolicyField(grid);
    for (int j = 0; j <= grid.n_time; ++j) {
        const MeasureStats m = state.flow.stats_at(j);
        for (int i = 0; i <= grid.n_space; ++i)
            gibbs_policy(model, grid, grid.ts[j], grid.xs[i], state.value.DxJ(j, i), m,
                         state.lambda, next.pi.at(j, i));
    }
    next.value = solve_all_slices(model, grid, next.pi, state.flow, state.lambda);
    next.flow = solve_fokker_planck(model, grid, next.pi, state.flow, state.flow.density(0));
    return next;
}

/// Iterates phi_step from a cold start (or `warm_start` when given) until the
/// combined value-plus-flow gap falls below `tol` or `max_iters` steps pass.
/// Non-convergence is reported, not thrown.  The returned state's policy is
/// regenerated from its own value field and flow, so the softmax consistency
/// of the result is exact by construction.
[[nodiscard]] inline PiaResult run_pia(const ModelSpec& model, const GridSpec& grid,
                                       std::span<const double> initial_density, double lambda,
                                       double tol, int max_iters,
                                       const PiaState* warm_start = nullptr) {
    if (!(tol > 0.0)) throw ConfigError("run_pia: tol must be positive");
    if (max_iters < 1) throw ConfigError("run_pia: max_iters must be at least 1");

    PiaState state = warm_start ? *warm_start : initial_pia_state(model, grid, initial_density, lambda);
    state.lambda = lambda;
    state.iteration = 0;

    PiaResult result;
    result.report.tol = tol;
    result.report.lambda = lambda;
    double prev_gap = std::numeric_limits<double>::quiet_NaN();
    for (int k = 1; k <= max_iters; ++k) {
        const auto t0 = std::chrono::steady_clock::now();
        PiaState next = phi_step(model, grid, state);
        double dj = 0.0, dg = 0.0;
        for (int j = 0; j <= grid.n_time; ++j)
            for (int i = 0; i <= grid.n_space; ++i) {
                dj = std::max(dj, std::abs(next.value.J(j, i) - state.value.J(j, i)));
                dg = std::max(dg, std::abs(next.value.DxJ(j, i) - state.value.DxJ(j, i)));
            }
        PiaIterationRow row;
        row.k = k;
        row.value_gap = dj + dg;
        row.flow_gap = flow_distance(next.flow, state.flow);
        const double gap = row.value_gap + row.flow_gap;
        if (k >= 2) row.ratio = gap / prev_gap;
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.report.rows.push_back(row);
        state = std::move(next);
        prev_gap = gap;
        result.report.iterations = k;
        result.report.final_gap = gap;
        if (gap <= tol) {
            result.report.converged = true;
            break;
        }
    }
    detail::regenerate_policy(model, grid, state);
    result.state = std::move(state);
    return result;
}

/// Largest entropy magnitude of the policy over all time-space nodes.
[[nodiscard]] inline double max_policy_entropy(const GridSpec& grid, const RelaxedPolicyField& pi) {
    double worst = 0.0;
    for (int j = 0; j <= grid.n_time; ++j)
        for (int i = 0; i <= grid.n_space; ++i)
            worst = std::max(worst, std::abs(entropy(pi.at(j, i), grid)));
    return worst;
}

struct VanishingRow {
    double lambda = 0.0;
    double max_lambda_entropy = 0.0; ///< lambda * max |policy entropy| over the grid
    double value_gap = std::numeric_limits<double>::quiet_NaN(); ///< vs the previous lambda
    double flow_gap = std::numeric_limits<double>::quiet_NaN();  ///< vs the previous lambda
    double residual = 0.0;
    int iterations = 0;
    bool converged = false;
};

struct VanishingReport {
    std::vector<VanishingRow> rows;
    PiaState final_state;
    bool all_converged = true;
};

/// Solves the fixed point along the schedule lambda0 * 2^{-n} for
/// n = 0..n_halvings, warm-starting each run from the previous solution.
/// The entropy bonus lambda * |H| shrinks along the schedule while the
/// solutions form a Cauchy-like sequence, which is the evidence that the
/// regularized equilibria approach a limit as the regularization vanishes.
[[nodiscard]] inline VanishingReport vanishing_lambda(const ModelSpec& model, const GridSpec& grid,
                                                      std::span<const double> initial_density,
                                                      double lambda0, int n_halvings, double tol,
                                                      int max_iters) {
    if (!(lambda0 > 0.0)) throw ConfigError("vanishing_lambda: lambda0 must be positive");
    if (n_halvings < 0) throw ConfigError("vanishing_lambda: n_halvings must be non-negative");

    VanishingReport rep;
    PiaState prev_state;
    bool have_prev = false;
    for (int n = 0; n <= n_halvings; ++n) {
        const double lambda = lambda0 * std::pow(2.0, -n);
        PiaResult run = run_pia(model, grid, initial_density, lambda, tol, max_iters,
                                have_prev ? &prev_state : nullptr);
        VanishingRow row;
        row.lambda = lambda;
        row.max_lambda_entropy = lambda * max_policy_entropy(grid, run.state.pi);
        row.residual =
            eehjb_residual(model, grid, run.state.pi, run.state.flow, run.state.value, lambda)
                .max_abs;
        row.iterations = run.report.iterations;
        row.converged = run.report.converged;
        rep.all_converged = rep.all_converged && run.report.converged;
        if (have_prev) {
            double dj = 0.0;
            for (int j = 0; j <= grid.n_time; ++j)
                for (int i = 0; i <= grid.n_space; ++i)
                    dj = std::max(dj, std::abs(run.state.value.J(j, i) - prev_state.value.J(j, i)));
            row.value_gap = dj;
            row.flow_gap = flow_distance(run.state.flow, prev_state.flow);
        }
        rep.rows.push_back(row);
        prev_state = std::move(run.state);
        have_prev = true;
    }
    rep.final_state = std::move(prev_state);
    return rep;
}

} // namespace timfg
