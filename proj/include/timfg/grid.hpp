#pragma once

#include <cstddef>
#include <vector>

#include "timfg/errors.hpp"

namespace timfg {

enum class BoundaryPolicy {
    zero_flux_reflecting, ///< mass reflects at the state box; no probability leaves
};

/// Uniform discretization of time [0,T], the truncated state box
/// [x_lo, x_hi], and the action interval [a_lo, a_hi].  Action integrals use
/// trapezoid weights (half weight at the endpoints), so sum(aw) == a_hi-a_lo.
/// Space integrals use the same convention through x_weight().
struct GridSpec {
    double horizon = 1.0;
    int n_time = 0;  ///< number of time steps; nodes are 0..n_time
    int n_space = 0; ///< number of space cells; nodes are 0..n_space
    int n_action = 0;
    double x_lo = 0.0, x_hi = 0.0;
    double a_lo = 0.0, a_hi = 0.0;
    double ds = 0.0, dx = 0.0, da = 0.0;
    std::vector<double> ts, xs, as, aw;
    BoundaryPolicy boundary = BoundaryPolicy::zero_flux_reflecting;

    [[nodiscard]] double t_node(int j) const { return ts[static_cast<std::size_t>(j)]; }
    [[nodiscard]] double x_node(int i) const { return xs[static_cast<std::size_t>(i)]; }
    [[nodiscard]] double a_node(int k) const { return as[static_cast<std::size_t>(k)]; }

    /// Trapezoid weight of space node i (dx interior, dx/2 at the walls).
    [[nodiscard]] double x_weight(int i) const {
        return (i == 0 || i == n_space) ? 0.5 * dx : dx;
    }
};

inline GridSpec build_grid(double horizon, int n_time, double x_lo, double x_hi, int n_space,
                           double a_lo, double a_hi, int n_action) {
    if (horizon <= 0.0) throw ConfigError("grid: horizon must be positive");
    if (n_time < 1 || n_space < 2 || n_action < 2)
        throw ConfigError("grid: need n_time >= 1, n_space >= 2, n_action >= 2");
    if (!(x_lo < x_hi)) throw ConfigError("grid: x_lo must be below x_hi");
    if (!(a_lo < a_hi)) throw ConfigError("grid: a_lo must be below a_hi");

    GridSpec g;
    g.horizon = horizon;
    g.n_time = n_time;
    g.n_space = n_space;
    g.n_action = n_action;
    g.x_lo = x_lo;
    g.x_hi = x_hi;
    g.a_lo = a_lo;
    g.a_hi = a_hi;
    g.ds = horizon / n_time;
    g.dx = (x_hi - x_lo) / n_space;
    g.da = (a_hi - a_lo) / n_action;

    g.ts.resize(n_time + 1);
    for (int j = 0; j <= n_time; ++j) g.ts[j] = (j == n_time) ? horizon : j * g.ds;
    g.xs.resize(n_space + 1);
    for (int i = 0; i <= n_space; ++i) g.xs[i] = (i == n_space) ? x_hi : x_lo + i * g.dx;
    g.as.resize(n_action + 1);
    g.aw.resize(n_action + 1);
    for (int k = 0; k <= n_action; ++k) {
        g.as[k] = (k == n_action) ? a_hi : a_lo + k * g.da;
        g.aw[k] = (k == 0 || k == n_action) ? 0.5 * g.da : g.da;
    }
    return g;
}

/// Values indexed by (t-node, s-node, x-node) with t <= s: one row of
/// n_space+1 doubles per admissible (t,s) pair, flat storage.  Row count is
/// (n_time+1)(n_time+2)/2.
template <typename T>
class TriangularField {
public:
    TriangularField() = default;
    TriangularField(int n_time, int n_space, T fill = T{})
        : n_time_(n_time), n_space_(n_space),
          data_(static_cast<std::size_t>(n_time + 1) * (n_time + 2) / 2 * (n_space + 1), fill) {}

    [[nodiscard]] int n_time() const { return n_time_; }
    [[nodiscard]] int n_space() const { return n_space_; }
    [[nodiscard]] std::size_t row_count() const {
        return static_cast<std::size_t>(n_time_ + 1) * (n_time_ + 2) / 2;
    }

    /// Flat row index of the pair (j_t, j_s); rows are grouped by j_t.
    [[nodiscard]] std::size_t row_index(int j_t, int j_s) const {
        check(j_t, j_s);
        const std::size_t t = j_t;
        return t * (n_time_ + 1) - t * (t - 1) / 2 + (j_s - j_t);
    }

    [[nodiscard]] T* row(int j_t, int j_s) {
        return data_.data() + row_index(j_t, j_s) * (n_space_ + 1);
    }
    [[nodiscard]] const T* row(int j_t, int j_s) const {
        return data_.data() + row_index(j_t, j_s) * (n_space_ + 1);
    }

    [[nodiscard]] T& at(int j_t, int j_s, int i) { return row(j_t, j_s)[i]; }
    [[nodiscard]] const T& at(int j_t, int j_s, int i) const { return row(j_t, j_s)[i]; }

private:
    void check(int j_t, int j_s) const {
        if (j_t < 0 || j_s < j_t || j_s > n_time_)
            throw ConfigError("triangular field: need 0 <= t-index <= s-index <= n_time");
    }

    int n_time_ = 0, n_space_ = 0;
    std::vector<T> data_;
};

} // namespace timfg
