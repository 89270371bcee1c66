#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "timfg/errors.hpp"
#include "timfg/grid.hpp"

namespace timfg {

/// Summary of one time-slice of the population measure, handed to model
/// coefficients.  mean/variance are precomputed; the density view lets custom
/// functionals integrate against the full grid density.  Views stay valid as
/// long as the owning flow (or density buffer) is alive.
struct MeasureStats {
    double mean = 0.0;
    double variance = 0.0;
    std::span<const double> density;
    std::span<const double> xs;
    double dx = 0.0;
};

/// Mean and variance of a grid density under the grid's trapezoid weights.
/// For densities supported away from the walls this agrees with the plain
/// sum(x_i p_i dx) convention to machine precision.
inline MeasureStats measure_stats_of(std::span<const double> density, const GridSpec& grid) {
    if (density.size() != grid.xs.size())
        throw ConfigError("measure_stats_of: density length does not match the space grid");
    double mass = 0.0, mean = 0.0;
    for (int i = 0; i <= grid.n_space; ++i) {
        const double w = grid.x_weight(i);
        if (density[i] < -1e-12)
            throw DensityError("measure_stats_of: negative density entry");
        mass += density[i] * w;
        mean += grid.xs[i] * density[i] * w;
    }
    if (std::abs(mass - 1.0) > 1e-8)
        throw DensityError("measure_stats_of: density mass " + std::to_string(mass) +
                           " is not 1 under grid weights");
    double var = 0.0;
    for (int i = 0; i <= grid.n_space; ++i)
        var += (grid.xs[i] - mean) * (grid.xs[i] - mean) * density[i] * grid.x_weight(i);
    MeasureStats s;
    s.mean = mean;
    s.variance = var < 0.0 ? 0.0 : var;
    s.density = density;
    s.xs = std::span<const double>(grid.xs.data(), grid.xs.size());
    s.dx = grid.dx;
    return s;
}

/// Problem data: drift b(t,x,m,a), volatility sigma(t,x,m), running reward
/// r(tau,x,m,a) keyed by elapsed time tau=s-t, terminal reward F(t,x,m),
/// and the discount delta(tau) that multiplies the entropy bonus
/// (delta(0)=1, delta>0).  Exact time derivatives may be supplied; otherwise
/// they are approximated by finite differences with step 1e-5 * horizon.
struct ModelSpec {
    std::string name = "custom";
    double horizon = 1.0;
    double action_lo = 0.0, action_hi = 1.0;

    std::function<double(double, double, const MeasureStats&, double)> drift;
    std::function<double(double, double, const MeasureStats&)> diffusion;
    std::function<double(double, double, const MeasureStats&, double)> running_reward;
    std::function<double(double, double, const MeasureStats&)> terminal_reward;
    std::function<double(double)> discount;

    std::function<double(double, double, const MeasureStats&, double)> d_tau_running_reward;
    std::function<double(double, double, const MeasureStats&)> d_t_terminal_reward;
    std::function<double(double)> d_discount;

    double k1_bound = 1.0;      ///< sup bound for |b|, |sigma|, |r|, |F| on the box
    double k2_lipschitz = 1.0;  ///< Lipschitz constant in x and in the measure
    double eta_ellipticity = 0.0; ///< lower bound for sigma^2
    double k6_terminal = 0.0;   ///< measure-Lipschitz constant of the terminal reward

    [[nodiscard]] double fd_step() const { return 1e-5 * horizon; }

    [[nodiscard]] double d_tau_running(double tau, double x, const MeasureStats& m, double a) const {
        if (d_tau_running_reward) return d_tau_running_reward(tau, x, m, a);
        const double h = fd_step();
        if (tau >= h && tau + h <= horizon)
            return (running_reward(tau + h, x, m, a) - running_reward(tau - h, x, m, a)) / (2 * h);
        if (tau < h)
            return (-3 * running_reward(tau, x, m, a) + 4 * running_reward(tau + h, x, m, a) -
                    running_reward(tau + 2 * h, x, m, a)) / (2 * h);
        return (3 * running_reward(tau, x, m, a) - 4 * running_reward(tau - h, x, m, a) +
                running_reward(tau - 2 * h, x, m, a)) / (2 * h);
    }

    [[nodiscard]] double d_t_terminal(double t, double x, const MeasureStats& m) const {
        if (d_t_terminal_reward) return d_t_terminal_reward(t, x, m);
        const double h = fd_step();
        if (t >= h && t + h <= horizon)
            return (terminal_reward(t + h, x, m) - terminal_reward(t - h, x, m)) / (2 * h);
        if (t < h)
            return (-3 * terminal_reward(t, x, m) + 4 * terminal_reward(t + h, x, m) -
                    terminal_reward(t + 2 * h, x, m)) / (2 * h);
        return (3 * terminal_reward(t, x, m) - 4 * terminal_reward(t - h, x, m) +
                terminal_reward(t - 2 * h, x, m)) / (2 * h);
    }

    [[nodiscard]] double discount_deriv(double tau) const {
        if (d_discount) return d_discount(tau);
        const double h = fd_step();
        if (tau >= h && tau + h <= horizon)
            return (discount(tau + h) - discount(tau - h)) / (2 * h);
        if (tau < h)
            return (-3 * discount(tau) + 4 * discount(tau + h) - discount(tau + 2 * h)) / (2 * h);
        return (3 * discount(tau) - 4 * discount(tau - h) + discount(tau - 2 * h)) / (2 * h);
    }
};

inline void require_finite(double v, const char* coefficient, double t, double x, double a) {
    if (!std::isfinite(v)) {
        std::ostringstream os;
        os << "model coefficient " << coefficient << " returned a non-finite value at (t=" << t
           << ", x=" << x << ", a=" << a << ")";
        throw ModelError(os.str());
    }
}

/// How densely audit_assumptions samples each axis.
struct AuditLattice {
    int n_time = 9;
    int n_space = 17;
    int n_action = 9;
    int n_mean = 5; ///< means of the synthetic Gaussian measures
    int n_std = 4;  ///< standard deviations of the synthetic Gaussian measures
};

struct AuditEntry {
    std::string check;
    double margin = 0.0; ///< >= 0 (within 1e-9) means the assumption holds
    bool pass = false;
    std::string worst_point;
};

struct AssumptionReport {
    std::vector<AuditEntry> entries;
    bool pass = false;

    [[nodiscard]] std::string to_string() const {
        std::ostringstream os;
        for (const auto& e : entries)
            os << (e.pass ? "ok   " : "FAIL ") << e.check << "  margin=" << e.margin
               << (e.worst_point.empty() ? "" : "  worst at " + e.worst_point) << "\n";
        os << (pass ? "all assumptions hold" : "assumption violation detected") << "\n";
        return os.str();
    }
};

namespace detail {

inline std::string point_label(double t, double x, double a, bool with_action) {
    std::ostringstream os;
    os << "(t=" << t << ", x=" << x;
    if (with_action) os << ", a=" << a;
    os << ")";
    return os.str();
}

inline std::vector<double> gaussian_density(const GridSpec& grid, double mean, double std_dev) {
    std::vector<double> p(grid.n_space + 1);
    double mass = 0.0;
    for (int i = 0; i <= grid.n_space; ++i) {
        const double z = (grid.xs[i] - mean) / std_dev;
        p[i] = std::exp(-0.5 * z * z);
        mass += p[i] * grid.x_weight(i);
    }
    for (auto& v : p) v /= mass;
    return p;
}

} // namespace detail

/// Checks the standing assumptions on a sampling lattice over the truncated
/// box: the uniform bound K1 on |b|,|sigma|,|r|,|F|; ellipticity sigma^2>=eta;
/// delta(0)=1 and delta>0; sampled Lipschitz ratios in x against K2 and in
/// the measure (synthetic Gaussian slices, closed-form transport distance)
/// against K2, with the terminal reward audited against K6.
inline AssumptionReport audit_assumptions(const ModelSpec& model, const GridSpec& grid,
                                          const AuditLattice& lattice = {}) {
    if (lattice.n_time < 8 || lattice.n_space < 8 || lattice.n_action < 8)
        throw ConfigError("audit_assumptions: lattice needs at least 8 samples per t/x/a axis");
    if (lattice.n_mean < 2 || lattice.n_std < 2)
        throw ConfigError("audit_assumptions: lattice needs at least 2 measure samples per axis");

    const double T = model.horizon;
    std::vector<double> ts(lattice.n_time), xs(lattice.n_space), as(lattice.n_action);
    for (int j = 0; j < lattice.n_time; ++j) ts[j] = T * j / (lattice.n_time - 1);
    for (int i = 0; i < lattice.n_space; ++i)
        xs[i] = grid.x_lo + (grid.x_hi - grid.x_lo) * i / (lattice.n_space - 1);
    for (int k = 0; k < lattice.n_action; ++k)
        as[k] = model.action_lo + (model.action_hi - model.action_lo) * k / (lattice.n_action - 1);

    const double width = grid.x_hi - grid.x_lo;
    std::vector<double> means(lattice.n_mean), stds(lattice.n_std);
    for (int i = 0; i < lattice.n_mean; ++i)
        means[i] = 0.25 * grid.x_lo + 0.25 * grid.x_hi +
                   0.5 * (grid.x_hi - grid.x_lo) * (i / (lattice.n_mean - 1.0) - 0.5);
    for (int i = 0; i < lattice.n_std; ++i)
        stds[i] = width / 20.0 + (width / 8.0 - width / 20.0) * i / (lattice.n_std - 1.0);

    struct Slice {
        std::vector<double> density;
        MeasureStats stats;
        double mean, std_dev;
    };
    std::vector<Slice> slices;
    slices.reserve(means.size() * stds.size());
    for (double mu : means)
        for (double sd : stds) {
            Slice s;
            s.density = detail::gaussian_density(grid, mu, sd);
            s.stats = measure_stats_of(s.density, grid);
            s.mean = mu;
            s.std_dev = sd;
            slices.push_back(std::move(s));
        }

    AssumptionReport report;
    auto add = [&report](const std::string& check, double margin, const std::string& worst) {
        AuditEntry e;
        e.check = check;
        e.margin = margin;
        e.pass = margin >= -1e-9;
        e.worst_point = worst;
        report.entries.push_back(std::move(e));
    };

    double max_abs = 0.0;
    std::string worst_abs;
    double min_sq = std::numeric_limits<double>::infinity();
    std::string worst_sq;
    auto track_abs = [&](double v, double t, double x, double a, bool wa) {
        if (std::abs(v) > max_abs) {
            max_abs = std::abs(v);
            worst_abs = detail::point_label(t, x, a, wa);
        }
    };

    for (const auto& s : slices)
        for (double t : ts)
            for (double x : xs) {
                const double sg = model.diffusion(t, x, s.stats);
                require_finite(sg, "sigma", t, x, 0.0);
                track_abs(sg, t, x, 0.0, false);
                if (sg * sg < min_sq) {
                    min_sq = sg * sg;
                    worst_sq = detail::point_label(t, x, 0.0, false);
                }
                const double F = model.terminal_reward(t, x, s.stats);
                require_finite(F, "terminal_reward", t, x, 0.0);
                track_abs(F, t, x, 0.0, false);
                for (double a : as) {
                    const double b = model.drift(t, x, s.stats, a);
                    require_finite(b, "drift", t, x, a);
                    track_abs(b, t, x, a, true);
                    const double r = model.running_reward(t, x, s.stats, a);
                    require_finite(r, "running_reward", t, x, a);
                    track_abs(r, t, x, a, true);
                }
            }
    add("k1_uniform_bound", model.k1_bound - max_abs, worst_abs);
    add("ellipticity", min_sq - model.eta_ellipticity, worst_sq);

    add("discount_at_zero", 1e-12 - std::abs(model.discount(0.0) - 1.0), "");
    double min_disc = std::numeric_limits<double>::infinity();
    for (double t : ts) min_disc = std::min(min_disc, model.discount(t));
    add("discount_positive", min_disc, "");

    double max_x_ratio = 0.0;
    std::string worst_x;
    const auto& mref = slices.front().stats;
    for (double t : ts)
        for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
            const double gap = xs[i + 1] - xs[i];
            auto ratio = [&](double f1, double f0) { return std::abs(f1 - f0) / gap; };
            for (double a : as) {
                const double rb = ratio(model.drift(t, xs[i + 1], mref, a), model.drift(t, xs[i], mref, a));
                const double rr = ratio(model.running_reward(t, xs[i + 1], mref, a),
                                        model.running_reward(t, xs[i], mref, a));
                if (std::max(rb, rr) > max_x_ratio) {
                    max_x_ratio = std::max(rb, rr);
                    worst_x = detail::point_label(t, xs[i], a, true);
                }
            }
            const double rs = ratio(model.diffusion(t, xs[i + 1], mref), model.diffusion(t, xs[i], mref));
            const double rF = ratio(model.terminal_reward(t, xs[i + 1], mref),
                                    model.terminal_reward(t, xs[i], mref));
            if (std::max(rs, rF) > max_x_ratio) {
                max_x_ratio = std::max(rs, rF);
                worst_x = detail::point_label(t, xs[i], 0.0, false);
            }
        }
    add("k2_lipschitz_x", model.k2_lipschitz - max_x_ratio, worst_x);

    double max_m_ratio = 0.0, max_term_ratio = 0.0;
    std::string worst_m, worst_term;
    for (std::size_t p = 0; p < slices.size(); ++p)
        for (std::size_t q = p + 1; q < slices.size(); ++q) {
            const double dmu = slices[p].mean - slices[q].mean;
            const double dsd = slices[p].std_dev - slices[q].std_dev;
            const double w2 = std::hypot(dmu, dsd);
            if (w2 < 1e-12) continue;
            for (double t : ts)
                for (double x : xs) {
                    const double rs = std::abs(model.diffusion(t, x, slices[p].stats) -
                                               model.diffusion(t, x, slices[q].stats)) / w2;
                    double rmax = rs;
                    for (double a : as) {
                        const double rb = std::abs(model.drift(t, x, slices[p].stats, a) -
                                                   model.drift(t, x, slices[q].stats, a)) / w2;
                        const double rr = std::abs(model.running_reward(t, x, slices[p].stats, a) -
                                                   model.running_reward(t, x, slices[q].stats, a)) / w2;
                        rmax = std::max({rmax, rb, rr});
                    }
                    if (rmax > max_m_ratio) {
                        max_m_ratio = rmax;
                        worst_m = detail::point_label(t, x, 0.0, false);
                    }
                    const double rF = std::abs(model.terminal_reward(t, x, slices[p].stats) -
                                               model.terminal_reward(t, x, slices[q].stats)) / w2;
                    if (rF > max_term_ratio) {
                        max_term_ratio = rF;
                        worst_term = detail::point_label(t, x, 0.0, false);
                    }
                }
        }
    add("k2_lipschitz_measure", model.k2_lipschitz - max_m_ratio, worst_m);
    add("k6_terminal_measure", model.k6_terminal - max_term_ratio, worst_term);

    report.pass = true;
    for (const auto& e : report.entries) report.pass = report.pass && e.pass;
    return report;
}

} // namespace timfg
