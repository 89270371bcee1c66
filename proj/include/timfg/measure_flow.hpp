#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "timfg/errors.hpp"
#include "timfg/gibbs.hpp"
#include "timfg/grid.hpp"
#include "timfg/model.hpp"
#include "timfg/parallel.hpp"
#include "timfg/tridiag.hpp"

namespace timfg {

/// Normalized Gaussian slice on the grid, used for initial conditions and
/// synthetic measures in tests and audits.
[[nodiscard]] inline std::vector<double> gaussian_density(const GridSpec& grid, double mean,
                                                          double std_dev) {
    if (!(std_dev > 0.0)) throw ConfigError("gaussian_density: std_dev must be positive");
    return detail::gaussian_density(grid, mean, std_dev);
}

/// One density per time node, each normalized to unit trapezoid mass.
/// Slices are finalized on write: mean and variance are cached so that
/// stats_at(j) is cheap and safe to call from model coefficients.
class MeasureFlow {
public:
    MeasureFlow() = default;
    explicit MeasureFlow(const GridSpec& grid)
        : grid_(grid), densities_(static_cast<std::size_t>(grid.n_time + 1) * (grid.n_space + 1), 0.0),
          means_(grid.n_time + 1, 0.0), variances_(grid.n_time + 1, 0.0) {}

    /// Flow that holds the same density at every time node.
    static MeasureFlow constant(const GridSpec& grid, std::span<const double> density) {
        MeasureFlow flow(grid);
        for (int j = 0; j <= grid.n_time; ++j) flow.set_density(j, density);
        return flow;
    }

    [[nodiscard]] const GridSpec& grid() const { return grid_; }

    [[nodiscard]] std::span<const double> density(int j) const {
        return {densities_.data() + offset(j), static_cast<std::size_t>(grid_.n_space + 1)};
    }

    void set_density(int j, std::span<const double> density) {
        if (static_cast<int>(density.size()) != grid_.n_space + 1)
            throw ConfigError("measure flow: density length does not match the space grid");
        std::copy(density.begin(), density.end(), densities_.begin() + offset(j));
        const MeasureStats s = measure_stats_of(this->density(j), grid_);
        means_[j] = s.mean;
        variances_[j] = s.variance;
    }

    [[nodiscard]] MeasureStats stats_at(int j) const {
        MeasureStats s;
        s.mean = means_[j];
        s.variance = variances_[j];
        s.density = density(j);
        s.xs = std::span<const double>(grid_.xs.data(), grid_.xs.size());
        s.dx = grid_.dx;
        return s;
    }

    [[nodiscard]] double mass(int j) const {
        double m = 0.0;
        const auto p = density(j);
        for (int i = 0; i <= grid_.n_space; ++i) m += p[i] * grid_.x_weight(i);
        return m;
    }

private:
    [[nodiscard]] std::size_t offset(int j) const {
        if (j < 0 || j > grid_.n_time) throw ConfigError("measure flow: time index out of range");
        return static_cast<std::size_t>(j) * (grid_.n_space + 1);
    }

    GridSpec grid_;
    std::vector<double> densities_;
    std::vector<double> means_, variances_;
};

/// Forward density evolution under the policy-averaged drift: implicit Euler
/// on the divergence form  dp/dt = d/dx(A dp/dx + a p)  with A = sigma^2/2
/// and a = dA/dx - drift_bar.  Fluxes live on cell faces with upwinded
/// advection and vanish at both walls, so the trapezoid mass is conserved
/// exactly and the step matrix is an M-matrix (density stays nonnegative).
/// Coefficients are read from the frozen flow at the left endpoint of each
/// step, matching the particle simulator.
[[nodiscard]] inline MeasureFlow solve_fokker_planck(const ModelSpec& model, const GridSpec& grid,
                                                     const RelaxedPolicyField& pi,
                                                     const MeasureFlow& frozen,
                                                     std::span<const double> initial_density) {
    if (pi.n_time() != grid.n_time || pi.n_space() != grid.n_space || pi.n_action() != grid.n_action)
        throw ConfigError("solve_fokker_planck: policy field does not match the grid");

    const PolicyAverages coeff =
        policy_averages(model, grid, pi, [&](int j) { return frozen.stats_at(j); });

    MeasureFlow flow(grid);
    flow.set_density(0, initial_density); // also validates mass and sign

    const int n = grid.n_space;
    std::vector<double> a_node(n + 1), big_a(n + 1);
    std::vector<double> lower(n + 1), diag(n + 1), upper(n + 1), rhs(n + 1);
    std::vector<double> p(flow.density(0).begin(), flow.density(0).end());

    for (int j = 0; j < grid.n_time; ++j) {
        for (int i = 0; i <= n; ++i) big_a[i] = 0.5 * coeff.sigma_sq[coeff.idx(j, i)];
        for (int i = 0; i <= n; ++i) {
            double dA;
            if (i == 0) dA = (big_a[1] - big_a[0]) / grid.dx;
            else if (i == n) dA = (big_a[n] - big_a[n - 1]) / grid.dx;
            else dA = (big_a[i + 1] - big_a[i - 1]) / (2.0 * grid.dx);
            a_node[i] = dA - coeff.drift_bar[coeff.idx(j, i)];
        }

        // Face flux F_{i+1/2} = cp * p_{i+1} + cm * p_i; walls carry no flux.
        auto face = [&](int i, double& cp, double& cm) {
            const double af = 0.5 * (a_node[i] + a_node[i + 1]);
            const double Af = 0.5 * (big_a[i] + big_a[i + 1]);
            cp = Af / grid.dx + std::max(af, 0.0);
            cm = -Af / grid.dx + std::min(af, 0.0);
        };

        for (int i = 0; i <= n; ++i) {
            const double h = grid.x_weight(i);
            double cp_r = 0.0, cm_r = 0.0, cp_l = 0.0, cm_l = 0.0;
            if (i < n) face(i, cp_r, cm_r);
            if (i > 0) face(i - 1, cp_l, cm_l);
            diag[i] = h / grid.ds - cm_r + cp_l;
            upper[i] = (i < n) ? -cp_r : 0.0;
            lower[i] = (i > 0) ? cm_l : 0.0;
            rhs[i] = h / grid.ds * p[i];
        }
        solve_tridiagonal(lower, diag, upper, rhs);

        double mass = 0.0;
        for (int i = 0; i <= n; ++i) {
            if (rhs[i] < 0.0) {
                if (rhs[i] < -1e-10)
                    throw NumericError("solve_fokker_planck: negative density beyond rounding noise");
                rhs[i] = 0.0;
            }
            mass += rhs[i] * grid.x_weight(i);
        }
        if (std::abs(mass - 1.0) > 1e-10)
            throw NumericError("solve_fokker_planck: mass drifted to " + std::to_string(mass));
        p = rhs;
        flow.set_density(j + 1, p);
    }
    return flow;
}

namespace detail {

/// Midpoint-rule quantiles of a grid density via piecewise-linear inversion
/// of its cumulative trapezoid sums.
inline std::vector<double> quantile_table(std::span<const double> density, const GridSpec& grid,
                                          int n_quantiles) {
    const int n = grid.n_space;
    double mass = 0.0;
    for (int i = 0; i <= n; ++i) {
        if (density[i] < -1e-12) throw DensityError("wasserstein: negative density entry");
        mass += std::max(density[i], 0.0) * grid.x_weight(i);
    }
    if (std::abs(mass - 1.0) > 1e-6)
        throw DensityError("wasserstein: density mass " + std::to_string(mass) + " is not 1");

    std::vector<double> cdf(n + 1, 0.0);
    for (int i = 1; i <= n; ++i)
        cdf[i] = cdf[i - 1] + 0.5 * (std::max(density[i - 1], 0.0) + std::max(density[i], 0.0)) * grid.dx;
    for (int i = 0; i <= n; ++i) cdf[i] /= mass;
    cdf[n] = 1.0;

    std::vector<double> q(n_quantiles);
    int seg = 0;
    for (int k = 0; k < n_quantiles; ++k) {
        const double u = (k + 0.5) / n_quantiles;
        while (seg < n && cdf[seg + 1] < u) ++seg;
        const double gap = cdf[seg + 1] - cdf[seg];
        q[k] = gap > 0.0 ? grid.xs[seg] + (u - cdf[seg]) / gap * grid.dx : grid.xs[seg + 1];
    }
    return q;
}

} // namespace detail

/// Quadratic transport distance between two grid densities through quantile
/// matching: the root mean square gap of the inverse distribution functions
/// on a midpoint grid of at least 4 * n_space quantiles.
[[nodiscard]] inline double wasserstein2_1d(std::span<const double> p, std::span<const double> q,
                                            const GridSpec& grid, int n_quantiles = 0) {
    if (p.size() != grid.xs.size() || q.size() != grid.xs.size())
        throw ConfigError("wasserstein2_1d: density length does not match the space grid");
    if (n_quantiles <= 0) n_quantiles = 4 * grid.n_space;
    const auto qp = detail::quantile_table(p, grid, n_quantiles);
    const auto qq = detail::quantile_table(q, grid, n_quantiles);
    double s = 0.0;
    for (int k = 0; k < n_quantiles; ++k) s += (qp[k] - qq[k]) * (qp[k] - qq[k]);
    return std::sqrt(s / n_quantiles);
}

/// Uniform-in-time transport distance between two flows on the same grid.
[[nodiscard]] inline double flow_distance(const MeasureFlow& a, const MeasureFlow& b) {
    const GridSpec& grid = a.grid();
    if (b.grid().n_time != grid.n_time || b.grid().n_space != grid.n_space)
        throw ConfigError("flow_distance: flows live on different grids");
    std::vector<double> per_node(grid.n_time + 1);
    parallel_for(grid.n_time + 1, [&](std::size_t j) {
        per_node[j] = wasserstein2_1d(a.density(static_cast<int>(j)), b.density(static_cast<int>(j)), grid);
    });
    double d = 0.0;
    for (double v : per_node) d = std::max(d, v);
    return d;
}

struct FlowRegularityReport {
    double holder_sup = 0.0; ///< sup over node pairs of W2^2(m_t, m_s)/|t-s|
    double moment_sup = 0.0; ///< sup over nodes of the (2+kappa)-th absolute moment
    double kappa = 0.0;
};

/// Half-Hoelder regularity and moment diagnostics of a flow.
[[nodiscard]] inline FlowRegularityReport flow_regularity_report(const MeasureFlow& flow,
                                                                 double kappa) {
    const GridSpec& grid = flow.grid();
    const int nq = 4 * grid.n_space;
    std::vector<std::vector<double>> tables(grid.n_time + 1);
    parallel_for(grid.n_time + 1, [&](std::size_t j) {
        tables[j] = detail::quantile_table(flow.density(static_cast<int>(j)), grid, nq);
    });

    FlowRegularityReport rep;
    rep.kappa = kappa;
    for (int j = 0; j <= grid.n_time; ++j) {
        double mom = 0.0;
        const auto p = flow.density(j);
        for (int i = 0; i <= grid.n_space; ++i)
            mom += std::pow(std::abs(grid.xs[i]), 2.0 + kappa) * p[i] * grid.x_weight(i);
        rep.moment_sup = std::max(rep.moment_sup, mom);
        for (int l = j + 1; l <= grid.n_time; ++l) {
            double w2sq = 0.0;
            for (int k = 0; k < nq; ++k)
                w2sq += (tables[j][k] - tables[l][k]) * (tables[j][k] - tables[l][k]);
            w2sq /= nq;
            rep.holder_sup = std::max(rep.holder_sup, w2sq / (grid.ts[l] - grid.ts[j]));
        }
    }
    return rep;
}

} // namespace timfg
