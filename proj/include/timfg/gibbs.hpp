#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "timfg/errors.hpp"
#include "timfg/grid.hpp"
#include "timfg/model.hpp"

namespace timfg {

/// Smallest density value fed to a logarithm; keeps entropy sums finite when
/// the exponential weights underflow.
inline constexpr double kDensityFloor = 1e-300;

/// Relaxed controls: one probability density over the action grid per
/// (time node, space node), normalized under the trapezoid action weights.
class RelaxedPolicyField {
public:
    RelaxedPolicyField() = default;
    RelaxedPolicyField(const GridSpec& grid, double fill = 0.0)
        : n_time_(grid.n_time), n_space_(grid.n_space), n_action_(grid.n_action),
          data_(static_cast<std::size_t>(grid.n_time + 1) * (grid.n_space + 1) * (grid.n_action + 1),
                fill) {}

    [[nodiscard]] int n_time() const { return n_time_; }
    [[nodiscard]] int n_space() const { return n_space_; }
    [[nodiscard]] int n_action() const { return n_action_; }

    [[nodiscard]] std::span<double> at(int j, int i) {
        return {data_.data() + offset(j, i), static_cast<std::size_t>(n_action_ + 1)};
    }
    [[nodiscard]] std::span<const double> at(int j, int i) const {
        return {data_.data() + offset(j, i), static_cast<std::size_t>(n_action_ + 1)};
    }

    /// Constant density 1/(a_hi - a_lo) everywhere.
    static RelaxedPolicyField uniform(const GridSpec& grid) {
        RelaxedPolicyField f(grid, 1.0 / (grid.a_hi - grid.a_lo));
        return f;
    }

private:
    [[nodiscard]] std::size_t offset(int j, int i) const {
        if (j < 0 || j > n_time_ || i < 0 || i > n_space_)
            throw ConfigError("policy field: node index out of range");
        return (static_cast<std::size_t>(j) * (n_space_ + 1) + i) * (n_action_ + 1);
    }

    int n_time_ = 0, n_space_ = 0, n_action_ = 0;
    std::vector<double> data_;
};

namespace detail {

/// Fills exponent[k] = b(t,x,m,a_k) * grad + r at elapsed time 0, the tilt
/// that defines the softmax policy and its log-partition.
inline void gibbs_exponents(const ModelSpec& model, const GridSpec& grid, double t, double x,
                            double grad, const MeasureStats& m, std::span<double> exponent) {
    for (int k = 0; k <= grid.n_action; ++k) {
        const double a = grid.as[k];
        const double g = model.drift(t, x, m, a) * grad + model.running_reward(0.0, x, m, a);
        require_finite(g, "gibbs exponent (drift*grad + running_reward)", t, x, a);
        exponent[k] = g;
    }
}

} // namespace detail

/// Boltzmann policy over the action grid: density proportional to
/// exp((b*grad + r(0))/lambda), normalized so sum(pi * aw) == 1.  The shared
/// maximum is subtracted before exponentiation, so any finite exponents are
/// handled without overflow.
inline void gibbs_policy(const ModelSpec& model, const GridSpec& grid, double t, double x,
                         double grad, const MeasureStats& m, double lambda,
                         std::span<double> out) {
    if (!(lambda > 0.0)) throw ConfigError("gibbs_policy: lambda must be positive");
    if (out.size() != grid.as.size())
        throw ConfigError("gibbs_policy: output length does not match the action grid");
    detail::gibbs_exponents(model, grid, t, x, grad, m, out);
    double top = out[0];
    for (int k = 1; k <= grid.n_action; ++k) top = std::max(top, out[k]);
    double z = 0.0;
    for (int k = 0; k <= grid.n_action; ++k) {
        out[k] = std::exp((out[k] - top) / lambda);
        z += out[k] * grid.aw[k];
    }
    for (int k = 0; k <= grid.n_action; ++k) out[k] /= z;
}

[[nodiscard]] inline std::vector<double> gibbs_policy(const ModelSpec& model, const GridSpec& grid,
                                                      double t, double x, double grad,
                                                      const MeasureStats& m, double lambda) {
    std::vector<double> out(grid.as.size());
    gibbs_policy(model, grid, t, x, grad, m, lambda, out);
    return out;
}

/// Differential entropy -sum(pi ln pi * aw) of an action density.
[[nodiscard]] inline double entropy(std::span<const double> pi, const GridSpec& grid) {
    if (pi.size() != grid.aw.size())
        throw ConfigError("entropy: density length does not match the action grid");
    double h = 0.0;
    for (int k = 0; k <= grid.n_action; ++k) {
        if (pi[k] < 0.0) throw DensityError("entropy: negative action density entry");
        const double v = std::max(pi[k], kDensityFloor);
        h -= v * std::log(v) * grid.aw[k];
    }
    return h;
}

/// lambda * ln integral exp((b*grad + r(0))/lambda) da, evaluated with the
/// same max-shift as gibbs_policy.  Equals the policy's expected exponent
/// plus lambda times its entropy (softmax duality), exactly in the discrete
/// quadrature.
[[nodiscard]] inline double log_partition(const ModelSpec& model, const GridSpec& grid, double t,
                                          double x, double grad, const MeasureStats& m,
                                          double lambda) {
    if (!(lambda > 0.0)) throw ConfigError("log_partition: lambda must be positive");
    std::vector<double> g(grid.as.size());
    detail::gibbs_exponents(model, grid, t, x, grad, m, g);
    double top = g[0];
    for (int k = 1; k <= grid.n_action; ++k) top = std::max(top, g[k]);
    double z = 0.0;
    for (int k = 0; k <= grid.n_action; ++k) z += std::exp((g[k] - top) / lambda) * grid.aw[k];
    return top + lambda * std::log(z);
}

/// Policy-averaged coefficient fields shared by the value and density
/// solvers: drift_bar = integral b dpi, sigma_sq = sigma^2, entropy_bar =
/// entropy of the local action density, all per (time node, space node).
struct PolicyAverages {
    int n_time = 0, n_space = 0;
    std::vector<double> drift_bar, sigma_sq, entropy_bar;

    [[nodiscard]] std::size_t idx(int j, int i) const {
        return static_cast<std::size_t>(j) * (n_space + 1) + i;
    }
};

/// stats_at(j) must return the measure slice the coefficients see at time
/// node j.
template <typename StatsAt>
[[nodiscard]] PolicyAverages policy_averages(const ModelSpec& model, const GridSpec& grid,
                                             const RelaxedPolicyField& pi, StatsAt&& stats_at) {
    PolicyAverages f;
    f.n_time = grid.n_time;
    f.n_space = grid.n_space;
    const std::size_t n = static_cast<std::size_t>(grid.n_time + 1) * (grid.n_space + 1);
    f.drift_bar.resize(n);
    f.sigma_sq.resize(n);
    f.entropy_bar.resize(n);
    for (int j = 0; j <= grid.n_time; ++j) {
        const MeasureStats& m = stats_at(j);
        const double t = grid.ts[j];
        for (int i = 0; i <= grid.n_space; ++i) {
            const double x = grid.xs[i];
            const auto p = pi.at(j, i);
            double bbar = 0.0;
            for (int k = 0; k <= grid.n_action; ++k)
                bbar += model.drift(t, x, m, grid.as[k]) * p[k] * grid.aw[k];
            require_finite(bbar, "policy-averaged drift", t, x, 0.0);
            const double sg = model.diffusion(t, x, m);
            require_finite(sg, "sigma", t, x, 0.0);
            const std::size_t q = f.idx(j, i);
            f.drift_bar[q] = bbar;
            f.sigma_sq[q] = sg * sg;
            f.entropy_bar[q] = entropy(p, grid);
        }
    }
    return f;
}

} // namespace timfg
