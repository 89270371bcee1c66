#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "timfg/errors.hpp"
#include "timfg/gibbs.hpp"
#include "timfg/grid.hpp"
#include "timfg/measure_flow.hpp"
#include "timfg/model.hpp"
#include "timfg/parallel.hpp"
#include "timfg/rng.hpp"

namespace timfg {

/// Sum with a fixed pairwise reduction tree; the result does not depend on
/// how the terms were produced, so estimates are bitwise reproducible for
/// any worker count.
[[nodiscard]] inline double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t half = v.size() / 2;
    return pairwise_sum(v.subspan(0, half)) + pairwise_sum(v.subspan(half));
}

namespace detail {

[[nodiscard]] inline int nearest_node(const GridSpec& grid, double x) {
    const int i = static_cast<int>(std::lround((x - grid.x_lo) / grid.dx));
    return std::clamp(i, 0, grid.n_space);
}

[[nodiscard]] inline double reflect_into_box(double x, double lo, double hi) {
    const double width = hi - lo;
    while (x < lo || x > hi) {
        if (x < lo) x = 2.0 * lo - x;
        if (x > hi) x = 2.0 * hi - x;
        if (!std::isfinite(x)) throw NumericError("particle left the box with a non-finite state");
        (void)width;
    }
    return x;
}

/// Inverse of the trapezoid CDF of a grid density at level u in (0,1].
[[nodiscard]] inline double invert_cdf(std::span<const double> cdf, const GridSpec& grid, double u) {
    const int n = grid.n_space;
    int lo = 0, hi = n;
    while (hi - lo > 1) {
        const int mid = (lo + hi) / 2;
        if (cdf[mid] < u) lo = mid;
        else hi = mid;
    }
    const double gap = cdf[hi] - cdf[lo];
    return gap > 0.0 ? grid.xs[lo] + (u - cdf[lo]) / gap * grid.dx : grid.xs[hi];
}

[[nodiscard]] inline std::vector<double> trapezoid_cdf(std::span<const double> density,
                                                       const GridSpec& grid) {
    std::vector<double> cdf(grid.n_space + 1, 0.0);
    for (int i = 1; i <= grid.n_space; ++i)
        cdf[i] = cdf[i - 1] + 0.5 * (density[i - 1] + density[i]) * grid.dx;
    const double mass = cdf[grid.n_space];
    if (std::abs(mass - 1.0) > 1e-6)
        throw DensityError("particle sampling: density mass is not 1");
    for (auto& c : cdf) c /= mass;
    cdf[grid.n_space] = 1.0;
    return cdf;
}

} // namespace detail

/// Particle view of the population flow: explicit Euler steps under the
/// policy-averaged drift (nearest-node lookup), reflecting walls, and one
/// counter-based random stream per particle.  Histogram densities use the
/// node cells, so each slice has unit trapezoid mass by construction and the
/// result is independent of the worker count.
[[nodiscard]] inline MeasureFlow simulate_flow(const ModelSpec& model, const GridSpec& grid,
                                               const RelaxedPolicyField& pi,
                                               const MeasureFlow& frozen,
                                               std::span<const double> initial_density,
                                               std::size_t n_particles, std::uint64_t seed) {
    if (n_particles == 0) throw ConfigError("simulate_flow: need at least one particle");
    const PolicyAverages coeff =
        policy_averages(model, grid, pi, [&](int j) { return frozen.stats_at(j); });
    const auto cdf = detail::trapezoid_cdf(initial_density, grid);

    const int n_nodes = grid.n_space + 1;
    const int n_levels = grid.n_time + 1;
    const int workers = resolved_thread_count();
    std::vector<std::vector<std::int64_t>> local(
        workers, std::vector<std::int64_t>(static_cast<std::size_t>(n_levels) * n_nodes, 0));

    const std::size_t chunk = (n_particles + workers - 1) / workers;
    parallel_for(workers, [&](std::size_t w) {
        auto& counts = local[w];
        const std::size_t lo = w * chunk;
        const std::size_t hi = std::min(n_particles, lo + chunk);
        const double sqrt_ds = std::sqrt(grid.ds);
        for (std::size_t pid = lo; pid < hi; ++pid) {
            const CounterRng rng(seed, pid);
            double x = detail::invert_cdf(cdf, grid, rng.uniform(0));
            for (int j = 0; j < grid.n_time; ++j) {
                const int node = detail::nearest_node(grid, x);
                counts[static_cast<std::size_t>(j) * n_nodes + node] += 1;
                const std::size_t q = coeff.idx(j, node);
                x += coeff.drift_bar[q] * grid.ds +
                     std::sqrt(coeff.sigma_sq[q]) * sqrt_ds * rng.normal(1 + j);
                x = detail::reflect_into_box(x, grid.x_lo, grid.x_hi);
            }
            counts[static_cast<std::size_t>(grid.n_time) * n_nodes + detail::nearest_node(grid, x)] += 1;
        }
    });

    MeasureFlow flow(grid);
    std::vector<double> density(n_nodes);
    for (int j = 0; j <= grid.n_time; ++j) {
        for (int i = 0; i < n_nodes; ++i) {
            std::int64_t c = 0;
            for (int w = 0; w < workers; ++w)
                c += local[w][static_cast<std::size_t>(j) * n_nodes + i];
            density[i] = static_cast<double>(c) / (static_cast<double>(n_particles) * grid.x_weight(i));
        }
        flow.set_density(j, density);
    }
    return flow;
}

struct McEstimate {
    double estimate = 0.0;
    double std_error = 0.0;
    std::size_t n_paths = 0;
    std::uint64_t seed = 0;
};

/// Path-sampled auxiliary value V(t_node j_t, s_node j_s0, x): left-endpoint
/// quadrature of the elapsed-time reward plus the discounted entropy bonus
/// along reflected Euler paths, terminal reward at the path end.  The policy
/// and entropy are read at the nearest space node; rewards use the exact
/// particle position.
[[nodiscard]] inline McEstimate mc_value(const ModelSpec& model, const GridSpec& grid,
                                         const RelaxedPolicyField& pi, const MeasureFlow& flow,
                                         double lambda, int j_t, int j_s0, double x0,
                                         std::size_t n_paths, std::uint64_t seed) {
    if (!(lambda > 0.0)) throw ConfigError("mc_value: lambda must be positive");
    if (j_t < 0 || j_s0 < j_t || j_s0 > grid.n_time)
        throw ConfigError("mc_value: need 0 <= t-node <= s-node <= n_time");
    if (x0 < grid.x_lo || x0 > grid.x_hi) throw ConfigError("mc_value: start point outside the box");
    if (n_paths < 2) throw ConfigError("mc_value: need at least two paths");

    const PolicyAverages coeff =
        policy_averages(model, grid, pi, [&](int j) { return flow.stats_at(j); });
    const double t = grid.ts[j_t];

    std::vector<double> payoff(n_paths, 0.0);
    parallel_for(n_paths, [&](std::size_t pid) {
        const CounterRng rng(seed, pid);
        double x = x0;
        double acc = 0.0;
        for (int j = j_s0; j < grid.n_time; ++j) {
            const double tau = grid.ts[j] - t;
            const MeasureStats m = flow.stats_at(j);
            const int node = detail::nearest_node(grid, x);
            const auto p = pi.at(j, node);
            double rbar = 0.0;
            for (int k = 0; k <= grid.n_action; ++k)
                rbar += model.running_reward(tau, x, m, grid.as[k]) * p[k] * grid.aw[k];
            const std::size_t q = coeff.idx(j, node);
            acc += grid.ds * (rbar + lambda * model.discount(tau) * coeff.entropy_bar[q]);
            x += coeff.drift_bar[q] * grid.ds +
                 std::sqrt(coeff.sigma_sq[q]) * std::sqrt(grid.ds) * rng.normal(1 + j);
            x = detail::reflect_into_box(x, grid.x_lo, grid.x_hi);
        }
        acc += model.terminal_reward(t, x, flow.stats_at(grid.n_time));
        payoff[pid] = acc;
    });

    McEstimate est;
    est.n_paths = n_paths;
    est.seed = seed;
    est.estimate = pairwise_sum(payoff) / static_cast<double>(n_paths);
    std::vector<double> sq(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i)
        sq[i] = (payoff[i] - est.estimate) * (payoff[i] - est.estimate);
    const double var = pairwise_sum(sq) / static_cast<double>(n_paths - 1);
    est.std_error = std::sqrt(var / static_cast<double>(n_paths));
    return est;
}

/// Replaces the base policy on the time window [t_node, t_node + eps] by the
/// deviation policy; eps must sit on the time grid.  eps = 0 returns the base
/// policy unchanged.
[[nodiscard]] inline RelaxedPolicyField paste_policy(const GridSpec& grid,
                                                     const RelaxedPolicyField& base,
                                                     const RelaxedPolicyField& deviation,
                                                     int j_t, double eps) {
    if (j_t < 0 || j_t > grid.n_time) throw ConfigError("paste_policy: t-node out of range");
    if (eps < 0.0) throw ConfigError("paste_policy: window length must be nonnegative");
    const double steps = eps / grid.ds;
    const int k = static_cast<int>(std::lround(steps));
    if (std::abs(steps - k) > 1e-9 * std::max(1.0, steps))
        throw ConfigError("paste_policy: window length is not a multiple of the time step");
    if (j_t + k > grid.n_time)
        throw ConfigError("paste_policy: window [t, t+eps] leaves the horizon");

    RelaxedPolicyField out = base;
    if (k == 0) return out;
    for (int j = j_t; j <= j_t + k; ++j)
        for (int i = 0; i <= grid.n_space; ++i) {
            const auto src = deviation.at(j, i);
            auto dst = out.at(j, i);
            std::copy(src.begin(), src.end(), dst.begin());
        }
    return out;
}

} // namespace timfg
