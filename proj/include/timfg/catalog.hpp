#pragma once

#include <cmath>
#include <string>

#include "timfg/model.hpp"

namespace timfg {

/// Built-in test models.
///
/// "lq_mean": drift a + 0.4*mean, constant volatility, rewards quadratic in
///   action and state with hyperbolic elapsed-time damping, hyperbolic
///   discount.  Time-inconsistent through both the reward damping and the
///   t-dependent terminal weight; the terminal reward ignores the measure.
///
/// "decoupled": drift, reward independent of action and measure, so the
///   relaxed policy is uniform and the population flow decouples from the
///   value; the fixed-point iteration settles after one sweep.
///
/// "timeconsistent": reward independent of elapsed time, terminal independent
///   of t, unit discount; every t-slice of the value solves the same problem.
inline ModelSpec catalog_model(const std::string& name, double horizon) {
    if (horizon <= 0.0) throw ConfigError("catalog_model: horizon must be positive");
    ModelSpec m;
    m.name = name;
    m.horizon = horizon;
    m.action_lo = 0.0;
    m.action_hi = 1.0;

    if (name == "lq_mean") {
        const double q_a = 20.0, q_x = 0.08, c_mean = 0.4, c_pull = 0.5;
        const double q_f = 0.1, theta_f = 0.5;
        m.drift = [c_mean](double, double, const MeasureStats& mm, double a) {
            return a + c_mean * mm.mean;
        };
        m.diffusion = [](double, double, const MeasureStats&) { return 0.5; };
        m.running_reward = [q_a, q_x, c_pull](double tau, double x, const MeasureStats& mm, double a) {
            const double dx = x - c_pull * mm.mean;
            return -(q_a * (a - 0.5) * (a - 0.5) + q_x * dx * dx) / (1.0 + tau);
        };
        m.d_tau_running_reward = [q_a, q_x, c_pull](double tau, double x, const MeasureStats& mm,
                                                    double a) {
            const double dx = x - c_pull * mm.mean;
            return (q_a * (a - 0.5) * (a - 0.5) + q_x * dx * dx) / ((1.0 + tau) * (1.0 + tau));
        };
        m.terminal_reward = [q_f, theta_f, horizon](double t, double x, const MeasureStats&) {
            return -q_f * x * x * (1.0 + theta_f * t / horizon);
        };
        m.d_t_terminal_reward = [q_f, theta_f, horizon](double, double x, const MeasureStats&) {
            return -q_f * x * x * theta_f / horizon;
        };
        m.discount = [](double tau) { return 1.0 / (1.0 + tau); };
        m.d_discount = [](double tau) { return -1.0 / ((1.0 + tau) * (1.0 + tau)); };
        m.k1_bound = 8.0;
        m.k2_lipschitz = 2.0;
        m.eta_ellipticity = 0.25;
        m.k6_terminal = 0.0;
        return m;
    }

    if (name == "decoupled") {
        m.drift = [](double, double, const MeasureStats&, double) { return 0.3; };
        m.diffusion = [](double, double, const MeasureStats&) { return 0.5; };
        m.running_reward = [](double tau, double x, const MeasureStats&, double) {
            return -0.2 * x * x / (1.0 + tau);
        };
        m.d_tau_running_reward = [](double tau, double x, const MeasureStats&, double) {
            return 0.2 * x * x / ((1.0 + tau) * (1.0 + tau));
        };
        m.terminal_reward = [](double, double x, const MeasureStats&) { return -0.1 * x * x; };
        m.d_t_terminal_reward = [](double, double, const MeasureStats&) { return 0.0; };
        m.discount = [](double tau) { return 1.0 / (1.0 + tau); };
        m.d_discount = [](double tau) { return -1.0 / ((1.0 + tau) * (1.0 + tau)); };
        m.k1_bound = 4.0;
        m.k2_lipschitz = 2.0;
        m.eta_ellipticity = 0.25;
        m.k6_terminal = 0.0;
        return m;
    }

    if (name == "timeconsistent") {
        m.drift = [](double, double, const MeasureStats& mm, double a) { return a + 0.3 * mm.mean; };
        m.diffusion = [](double, double, const MeasureStats&) { return 0.5; };
        m.running_reward = [](double, double x, const MeasureStats&, double a) {
            return -5.0 * (a - 0.5) * (a - 0.5) - 0.08 * x * x;
        };
        m.d_tau_running_reward = [](double, double, const MeasureStats&, double) { return 0.0; };
        m.terminal_reward = [](double, double x, const MeasureStats&) { return -0.1 * x * x; };
        m.d_t_terminal_reward = [](double, double, const MeasureStats&) { return 0.0; };
        m.discount = [](double) { return 1.0; };
        m.d_discount = [](double) { return 0.0; };
        m.k1_bound = 4.0;
        m.k2_lipschitz = 2.0;
        m.eta_ellipticity = 0.25;
        m.k6_terminal = 0.0;
        return m;
    }

    throw ConfigError("catalog_model: unknown model name \"" + name +
                      "\" (known: lq_mean, decoupled, timeconsistent)");
}

} // namespace timfg
