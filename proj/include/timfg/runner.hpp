#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "timfg/catalog.hpp"
#include "timfg/config.hpp"
#include "timfg/csv.hpp"
#include "timfg/errors.hpp"
#include "timfg/gibbs.hpp"
#include "timfg/grid.hpp"
#include "timfg/mc_oracle.hpp"
#include "timfg/measure_flow.hpp"
#include "timfg/model.hpp"
#include "timfg/parallel.hpp"
#include "timfg/pia.hpp"
#include "timfg/value_pde.hpp"
#include "timfg/verify.hpp"

namespace timfg {

/// Model, grid, and initial density resolved from a config; every command
/// starts here.  Also applies the thread-count request.
struct RunSetup {
    ModelSpec model;
    GridSpec grid;
    std::vector<double> nu;
};

[[nodiscard]] inline RunSetup make_setup(const RunConfig& cfg) {
    set_thread_count(cfg.threads);
    RunSetup s;
    s.model = catalog_model(cfg.model_name, cfg.horizon);
    s.grid = build_grid(cfg.horizon, cfg.n_time, cfg.x_lo, cfg.x_hi, cfg.n_space,
                        s.model.action_lo, s.model.action_hi, cfg.n_action);
    s.nu = gaussian_density(s.grid, cfg.nu_mean, cfg.nu_std);
    return s;
}

namespace detail {

inline std::string out_path(const RunConfig& cfg, const char* file) {
    std::filesystem::create_directories(cfg.out_dir);
    return (std::filesystem::path(cfg.out_dir) / file).string();
}

inline void write_diagonal_csv(const RunConfig& cfg, const GridSpec& grid,
                               const AuxValueField& value) {
    CsvWriter csv(out_path(cfg, "diagonal.csv"), {"t", "x", "J", "DxJ"});
    for (int j = 0; j <= grid.n_time; ++j)
        for (int i = 0; i <= grid.n_space; ++i)
            csv.write_row({grid.ts[j], grid.xs[i], value.J(j, i), value.DxJ(j, i)});
}

inline void write_density_csv(const RunConfig& cfg, const GridSpec& grid, const MeasureFlow& flow) {
    CsvWriter csv(out_path(cfg, "density.csv"), {"t", "x", "p"});
    for (int j = 0; j <= grid.n_time; ++j) {
        const auto p = flow.density(j);
        for (int i = 0; i <= grid.n_space; ++i) csv.write_row({grid.ts[j], grid.xs[i], p[i]});
    }
}

inline void write_value_slice_csv(const RunConfig& cfg, const GridSpec& grid,
                                  const AuxValueField& value, int j_t) {
    CsvWriter csv(out_path(cfg, "value_slice.csv"), {"t", "s", "x", "V"});
    for (int j_s = j_t; j_s <= grid.n_time; ++j_s) {
        const double* row = value.values.row(j_t, j_s);
        for (int i = 0; i <= grid.n_space; ++i)
            csv.write_row({grid.ts[j_t], grid.ts[j_s], grid.xs[i], row[i]});
    }
}

inline void write_convergence_csv(const RunConfig& cfg, const ConvergenceReport& report) {
    CsvWriter csv(out_path(cfg, "convergence.csv"), {"k", "d_m", "d_J", "ratio", "seconds"});
    for (const auto& row : report.rows)
        csv.write_row({static_cast<double>(row.k), row.flow_gap, row.value_gap, row.ratio,
                       row.seconds});
}

} // namespace detail

/// Solves the fixed point and persists convergence history, the value
/// diagonal, the density flow, and the t = 0 value slice.  Returns 0 on
/// success, 3 on non-convergence without allow_nonconverged.
inline int command_pia(const RunConfig& cfg, std::ostream& log = std::cout) {
    const RunSetup s = make_setup(cfg);
    write_resolved_config(cfg, detail::out_path(cfg, "resolved_config.json"));
    const PiaResult result = run_pia(s.model, s.grid, s.nu, cfg.lambda, cfg.tol, cfg.max_iters);
    detail::write_convergence_csv(cfg, result.report);
    detail::write_diagonal_csv(cfg, s.grid, result.state.value);
    detail::write_density_csv(cfg, s.grid, result.state.flow);
    detail::write_value_slice_csv(cfg, s.grid, result.state.value, 0);
    log << "pia: model=" << cfg.model_name << " lambda=" << format_double(cfg.lambda)
        << " iters=" << result.report.iterations
        << " gap=" << format_double(result.report.final_gap)
        << (result.report.converged ? " converged" : " NOT CONVERGED") << '\n';
    if (!result.report.converged && !cfg.allow_nonconverged) return 3;
    return 0;
}

/// Runs the halving schedule and persists one row per regularization level.
inline int command_vanish(const RunConfig& cfg, std::ostream& log = std::cout) {
    const RunSetup s = make_setup(cfg);
    write_resolved_config(cfg, detail::out_path(cfg, "resolved_config.json"));
    const VanishingReport rep = vanishing_lambda(s.model, s.grid, s.nu, cfg.lambda0, cfg.halvings,
                                                 cfg.tol, cfg.max_iters);
    CsvWriter csv(detail::out_path(cfg, "vanishing.csv"),
                  {"lambda", "max_lambda_entropy", "J_gap", "m_gap", "residual", "iters"});
    for (const auto& row : rep.rows)
        csv.write_row({row.lambda, row.max_lambda_entropy, row.value_gap, row.flow_gap,
                       row.residual, static_cast<double>(row.iterations)});
    log << "vanish: model=" << cfg.model_name << " levels=" << rep.rows.size()
        << " final_lambda_entropy=" << format_double(rep.rows.back().max_lambda_entropy)
        << (rep.all_converged ? " all converged" : " NOT ALL CONVERGED") << '\n';
    if (!rep.all_converged && !cfg.allow_nonconverged) return 3;
    return 0;
}

/// Solves the fixed point, then persists the equation residual over the
/// triangle interior, deviation gains for the canonical candidate set, and
/// the structural bound checks.
inline int command_verify(const RunConfig& cfg, std::ostream& log = std::cout) {
    const RunSetup s = make_setup(cfg);
    write_resolved_config(cfg, detail::out_path(cfg, "resolved_config.json"));
    const PiaResult result = run_pia(s.model, s.grid, s.nu, cfg.lambda, cfg.tol, cfg.max_iters);
    if (!result.report.converged && !cfg.allow_nonconverged) {
        log << "verify: fixed point did not converge (gap="
            << format_double(result.report.final_gap) << "); rerun with --allow-nonconverged"
            << " to verify the partial result\n";
        return 3;
    }
    const PiaState& st = result.state;

    const ResidualReport res =
        eehjb_residual(s.model, s.grid, st.pi, st.flow, st.value, cfg.lambda);
    {
        CsvWriter csv(detail::out_path(cfg, "residual.csv"), {"t", "s", "x", "residual"});
        for (int j_t = 0; j_t <= s.grid.n_time; ++j_t)
            for (int j_s = j_t; j_s < s.grid.n_time; ++j_s)
                for (int i = 1; i < s.grid.n_space; ++i)
                    csv.write_row({s.grid.ts[j_t], s.grid.ts[j_s], s.grid.xs[i],
                                   res.field.at(j_t, j_s, i)});
    }

    std::vector<DeviationProbe> probes;
    int latest = 0;
    for (double frac : {0.25, 0.5, 0.75}) {
        const int j_t = std::min(static_cast<int>(std::lround(frac * s.grid.n_time)),
                                 s.grid.n_time - 1);
        latest = std::max(latest, j_t);
        for (double xfrac : {0.25, 0.5, 0.75})
            probes.push_back({j_t, static_cast<int>(std::lround(xfrac * s.grid.n_space))});
    }
    // on coarse time grids the preferred windows are cut back so the pasted
    // policy never leaves the horizon at the latest probe
    std::vector<double> eps_set;
    for (int k : {4, 2}) eps_set.push_back(s.grid.ds * std::min(k, s.grid.n_time - latest));
    const auto rows = deviation_gain(s.model, s.grid, st.pi, st.flow, st.value, cfg.lambda, probes,
                                     default_deviation_candidates(s.grid), eps_set, "pde");
    double max_gain = -std::numeric_limits<double>::infinity();
    {
        CsvWriter csv(detail::out_path(cfg, "deviation.csv"),
                      {"t", "x", "candidate", "eps", "gain", "std_error", "method"});
        for (const auto& row : rows) {
            csv.write_strings({format_double(row.t), format_double(row.x), row.candidate,
                               format_double(row.eps), format_double(row.gain),
                               format_double(row.std_error), row.method});
            max_gain = std::max(max_gain, row.gain);
        }
    }

    const LemmaReport lemmas =
        lemma_checks(s.model, s.grid, st.flow, cfg.lambda,
                     [&](double T) { return catalog_model(cfg.model_name, T); });
    {
        CsvWriter csv(detail::out_path(cfg, "lemmas.csv"),
                      {"check", "probe", "value", "bound", "pass"});
        for (const auto& row : lemmas.rows)
            csv.write_strings({row.check, row.probe, format_double(row.value),
                               format_double(row.bound), row.pass ? "1" : "0"});
    }

    const double gibbs_gap = gibbs_consistency(s.model, s.grid, st.pi, st.flow, st.value, cfg.lambda);
    const ConsistencyGap cons = consistency_gap(s.model, s.grid, st.pi, st.flow);
    log << "verify: residual_max=" << format_double(res.max_abs)
        << " gibbs_gap=" << format_double(gibbs_gap)
        << " fp_gap=" << format_double(cons.fp_gap) << " max_deviation_gain="
        << format_double(max_gain) << " lemmas=" << (lemmas.pass ? "pass" : "FAIL") << '\n';
    return 0;
}

/// Cross-checks the path sampler against the grid solvers at a handful of
/// probes and persists one row per query.
inline int command_mc_check(const RunConfig& cfg, std::ostream& log = std::cout) {
    const RunSetup s = make_setup(cfg);
    write_resolved_config(cfg, detail::out_path(cfg, "resolved_config.json"));
    const PiaResult result = run_pia(s.model, s.grid, s.nu, cfg.lambda, cfg.tol, cfg.max_iters);
    if (!result.report.converged && !cfg.allow_nonconverged) {
        log << "mc-check: fixed point did not converge\n";
        return 3;
    }
    const PiaState& st = result.state;

    CsvWriter csv(detail::out_path(cfg, "mc_report.csv"),
                  {"query", "estimate", "stderr", "n", "seed"});
    double worst_z = 0.0;
    for (double frac : {0.0, 0.5}) {
        const int j_t = static_cast<int>(std::lround(frac * s.grid.n_time));
        for (double xfrac : {0.3, 0.5, 0.7}) {
            const int i = static_cast<int>(std::lround(xfrac * s.grid.n_space));
            const McEstimate est = mc_value(s.model, s.grid, st.pi, st.flow, cfg.lambda, j_t, j_t,
                                            s.grid.xs[i], cfg.n_paths, cfg.seed);
            const std::string query = "J(t=" + format_double(s.grid.ts[j_t]) +
                                      ",x=" + format_double(s.grid.xs[i]) + ")";
            csv.write_strings({query, format_double(est.estimate), format_double(est.std_error),
                               std::to_string(est.n_paths), std::to_string(est.seed)});
            const double pde = st.value.J(j_t, i);
            csv.write_strings({"pde_" + query, format_double(pde), "0",
                               std::to_string(est.n_paths), std::to_string(est.seed)});
            worst_z = std::max(worst_z, std::abs(est.estimate - pde) /
                                            std::max(est.std_error, 1e-12));
        }
    }
    {
        const MeasureFlow particles =
            simulate_flow(s.model, s.grid, st.pi, st.flow, st.flow.density(0), cfg.n_particles,
                          cfg.seed);
        const double w2 = wasserstein2_1d(st.flow.density(s.grid.n_time),
                                          particles.density(s.grid.n_time), s.grid);
        csv.write_strings({"terminal_flow_w2", format_double(w2), "nan",
                           std::to_string(cfg.n_particles), std::to_string(cfg.seed)});
    }
    log << "mc-check: worst |pde - mc| / stderr = " << format_double(worst_z) << '\n';
    return 0;
}

/// Fast closed-form checks of the numerical core; exits nonzero on any
/// failure.  Each check has a hand-computable expected value.
inline int command_selftest(std::ostream& log = std::cout) {
    int failures = 0;
    const auto check = [&](const char* name, bool ok) {
        log << (ok ? "ok   " : "FAIL ") << name << '\n';
        if (!ok) ++failures;
    };

    try {
        const GridSpec g = build_grid(1.0, 4, -1.0, 1.0, 4, 0.0, 1.0, 4);
        check("trapezoid weights sum to the box width",
              std::abs(g.x_weight(0) + g.x_weight(1) + g.x_weight(2) + g.x_weight(3) +
                       g.x_weight(4) - 2.0) < 1e-15);
        const TriangularField<double> f(4, 4);
        check("triangular field row count", f.row_count() == 15);

        ModelSpec flat;
        flat.name = "selftest";
        flat.horizon = 1.0;
        flat.action_lo = 0.0;
        flat.action_hi = 1.0;
        flat.drift = [](double, double, const MeasureStats&, double a) { return a; };
        flat.diffusion = [](double, double, const MeasureStats&) { return 0.5; };
        flat.running_reward = [](double, double, const MeasureStats&, double) { return 0.0; };
        flat.terminal_reward = [](double, double x, const MeasureStats&) { return x; };
        flat.discount = [](double) { return 1.0; };
        flat.k1_bound = 1.0;

        const GridSpec ga = build_grid(1.0, 4, -1.0, 1.0, 4, 0.0, 1.0, 4096);
        MeasureStats m;
        m.mean = 0.0;
        m.variance = 1.0;
        const auto pi = gibbs_policy(flat, ga, 0.0, 0.0, 1.0, m, 1.0);
        // exp(a)/(e-1) on [0,1]: density 1/(e-1) at a=0 and e/(e-1) at a=1
        check("softmax endpoint density at a=0",
              std::abs(pi.front() - 0.5819767068693265) < 1e-8);
        check("softmax endpoint density at a=1",
              std::abs(pi.back() - 1.5819767068693265) < 1e-8);
        check("softmax log-partition equals ln(e-1)",
              std::abs(log_partition(flat, ga, 0.0, 0.0, 1.0, m, 1.0) -
                       0.5413248546129181) < 1e-8);

        const GridSpec gv = build_grid(1.0, 32, -4.0, 4.0, 128, 0.0, 1.0, 8);
        ModelSpec mart = flat;
        mart.drift = [](double, double, const MeasureStats&, double) { return 0.0; };
        const auto nu = gaussian_density(gv, 0.0, 0.5);
        const MeasureFlow flow = MeasureFlow::constant(gv, nu);
        const auto piu = RelaxedPolicyField::uniform(gv);
        const SliceValues slice = solve_slice(mart, gv, piu, flow, 1.0, 0);
        double worst = 0.0;
        for (int i = 0; i <= gv.n_space; ++i)
            worst = std::max(worst, std::abs(slice.at(0, i) - gv.xs[i]));
        check("driftless solve reproduces a linear terminal exactly", worst < 1e-12);

        const MeasureFlow pushed = solve_fokker_planck(mart, gv, piu, flow, nu);
        check("density transport conserves mass",
              std::abs(pushed.mass(gv.n_time) - 1.0) < 1e-10);

        const auto pa = gaussian_density(gv, -0.5, 0.3);
        const auto pb = gaussian_density(gv, 0.5, 0.3);
        const double w2 = wasserstein2_1d(pa, pb, gv);
        check("transport distance between shifted bumps", std::abs(w2 - 1.0) < 0.02);
    } catch (const std::exception& e) {
        log << "FAIL selftest aborted: " << e.what() << '\n';
        ++failures;
    }
    return failures == 0 ? 0 : 4;
}

} // namespace timfg
