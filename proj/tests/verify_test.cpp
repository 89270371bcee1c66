#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "timfg/catalog.hpp"
#include "timfg/errors.hpp"
#include "timfg/grid.hpp"
#include "timfg/measure_flow.hpp"
#include "timfg/model.hpp"
#include "timfg/pia.hpp"
#include "timfg/value_pde.hpp"
#include "timfg/verify.hpp"

using namespace timfg;

namespace {

struct Equilibrium {
    ModelSpec model;
    GridSpec grid;
    std::vector<double> nu;
    PiaResult res;
};

const Equilibrium& fixed_point() {
    static const Equilibrium eq = [] {
        Equilibrium e;
        e.model = catalog_model("lq_mean", 0.25);
        e.grid = build_grid(0.25, 16, -3.0, 3.0, 48, e.model.action_lo, e.model.action_hi, 16);
        e.nu = gaussian_density(e.grid, 0.0, 0.5);
        e.res = run_pia(e.model, e.grid, e.nu, 0.5, 1e-6, 50);
        if (!e.res.report.converged) throw std::runtime_error("fixture did not converge");
        return e;
    }();
    return eq;
}

} // namespace

TEST_CASE("the equilibrium residual is small and a corrupted field is flagged") {
    const auto& eq = fixed_point();
    const auto& st = eq.res.state;
    const ResidualReport base =
        eehjb_residual(eq.model, eq.grid, st.pi, st.flow, st.value, st.lambda);
    const double budget = 5.0 * (eq.grid.ds + eq.grid.dx * eq.grid.dx);
    CHECK(base.max_abs > 0.0);
    CHECK(base.max_abs <= budget);

    AuxValueField bad = st.value;
    for (int j_t = 0; j_t <= eq.grid.n_time; ++j_t)
        for (int j_s = j_t; j_s <= eq.grid.n_time; ++j_s)
            for (int i = 0; i <= eq.grid.n_space; ++i)
                bad.values.at(j_t, j_s, i) += 3.0 * (eq.grid.ts[j_s] - eq.grid.ts[j_t]);
    const ResidualReport corrupted =
        eehjb_residual(eq.model, eq.grid, st.pi, st.flow, bad, st.lambda);
    CHECK(corrupted.max_abs > 2.8);
    CHECK(corrupted.max_abs < 3.0 + base.max_abs + 0.1);
    CHECK(corrupted.argmax_s >= corrupted.argmax_t);
}

TEST_CASE("residual evaluation rejects mismatched inputs") {
    const auto& eq = fixed_point();
    const auto& st = eq.res.state;
    CHECK_THROWS_AS(eehjb_residual(eq.model, eq.grid, st.pi, st.flow, st.value, 0.0), ConfigError);
    AuxValueField wrong = st.value;
    wrong.n_space = 7;
    CHECK_THROWS_AS(eehjb_residual(eq.model, eq.grid, st.pi, st.flow, wrong, 0.5), ConfigError);
}

TEST_CASE("softmax consistency separates the fixed point from a uniform policy") {
    const auto& eq = fixed_point();
    const auto& st = eq.res.state;
    CHECK(gibbs_consistency(eq.model, eq.grid, st.pi, st.flow, st.value, st.lambda) == 0.0);
    const auto uniform = RelaxedPolicyField::uniform(eq.grid);
    CHECK(gibbs_consistency(eq.model, eq.grid, uniform, st.flow, st.value, st.lambda) > 0.1);
}

TEST_CASE("the flow re-solve gap certifies the fixed point and rejects a stale flow") {
    const auto& eq = fixed_point();
    const auto& st = eq.res.state;
    const ConsistencyGap at_eq = consistency_gap(eq.model, eq.grid, st.pi, st.flow);
    CHECK(at_eq.fp_gap <= 2e-6);
    CHECK(std::isnan(at_eq.mc_gap));

    const MeasureFlow stale = MeasureFlow::constant(eq.grid, eq.nu);
    const ConsistencyGap off = consistency_gap(eq.model, eq.grid, st.pi, stale);
    CHECK(off.fp_gap > 0.01);

    const ConsistencyGap with_mc = consistency_gap(eq.model, eq.grid, st.pi, st.flow, 50000, 9);
    CHECK(std::isfinite(with_mc.mc_gap));
    CHECK(with_mc.mc_gap < 0.1);
}

TEST_CASE("action deviations cannot beat the fixed point to first order") {
    const auto& eq = fixed_point();
    const auto& st = eq.res.state;
    const std::vector<DeviationProbe> probes = {{eq.grid.n_time / 2, eq.grid.n_space / 2}};
    const auto candidates = default_deviation_candidates(eq.grid);
    const std::vector<double> eps_set = {4.0 * eq.grid.ds, 2.0 * eq.grid.ds};
    const auto rows = deviation_gain(eq.model, eq.grid, st.pi, st.flow, st.value, st.lambda,
                                     probes, candidates, eps_set);
    REQUIRE(rows.size() == candidates.size() * eps_set.size());
    for (const auto& row : rows) {
        CHECK(row.gain <= 0.05);
        CHECK(row.std_error == 0.0);
        CHECK(row.method == "pde");
    }
}

TEST_CASE("a uniform baseline is beaten by the peaked deviation") {
    const auto& eq = fixed_point();
    const auto& st = eq.res.state;
    const auto uniform = RelaxedPolicyField::uniform(eq.grid);
    const AuxValueField uniform_value =
        solve_all_slices(eq.model, eq.grid, uniform, st.flow, st.lambda);
    const std::vector<DeviationProbe> probes = {{eq.grid.n_time / 2, eq.grid.n_space / 2}};
    const auto candidates = default_deviation_candidates(eq.grid);
    const std::vector<double> eps_set = {4.0 * eq.grid.ds};

    const auto pde_rows = deviation_gain(eq.model, eq.grid, uniform, st.flow, uniform_value,
                                         st.lambda, probes, candidates, eps_set);
    double best = -1e30;
    std::string best_name;
    for (const auto& row : pde_rows)
        if (row.gain > best) {
            best = row.gain;
            best_name = row.candidate;
        }
    CHECK(best >= 0.05);
    CHECK(best_name == "peak@0.5");

    const auto mc_rows = deviation_gain(eq.model, eq.grid, uniform, st.flow, uniform_value,
                                        st.lambda, probes, {candidates[3]}, eps_set, "mc", 20000, 4);
    REQUIRE(mc_rows.size() == 1);
    CHECK(mc_rows[0].std_error > 0.0);
    CHECK(mc_rows[0].gain > 0.1);
}

TEST_CASE("deviation bookkeeping validates its inputs") {
    const auto& eq = fixed_point();
    const auto& st = eq.res.state;
    const auto candidates = default_deviation_candidates(eq.grid);
    CHECK_THROWS_AS(deviation_gain(eq.model, eq.grid, st.pi, st.flow, st.value, st.lambda,
                                   {{0, 0}}, candidates, {eq.grid.ds}, "nope"),
                    ConfigError);
    CHECK_THROWS_AS(deviation_gain(eq.model, eq.grid, st.pi, st.flow, st.value, st.lambda,
                                   {{-1, 0}}, candidates, {eq.grid.ds}),
                    ConfigError);
    CHECK_THROWS_AS(deviation_gain(eq.model, eq.grid, st.pi, st.flow, st.value, st.lambda,
                                   {{0, 0}}, candidates, {0.0}),
                    ConfigError);
}

TEST_CASE("the canonical deviation set is six normalized densities") {
    const auto& eq = fixed_point();
    const auto set = default_deviation_candidates(eq.grid);
    REQUIRE(set.size() == 6);
    CHECK(set[0].name == "uniform");
    CHECK(set[1].name == "peak@0");
    CHECK(set[5].name == "peak@1");
    for (const auto& cand : set) {
        double mass = 0.0;
        for (int k = 0; k <= eq.grid.n_action; ++k) mass += cand.density[k] * eq.grid.aw[k];
        CHECK(mass == Catch::Approx(1.0).margin(1e-12));
    }
    const auto peak = peaked_action_density(eq.grid, 0.5);
    const int mid = eq.grid.n_action / 2;
    CHECK(peak[mid] > 100.0 * peak[0]);
}

TEST_CASE("the structural softmax bounds hold on the crowd-seeking model") {
    const auto& eq = fixed_point();
    const LemmaReport rep =
        lemma_checks(eq.model, eq.grid, eq.res.state.flow, eq.res.state.lambda,
                     [](double T) { return catalog_model("lq_mean", T); });
    CHECK(rep.pass);
    // 13 gradient probes x 3 bound families + the entropy fit + 4 horizons
    CHECK(rep.rows.size() == 13 * 3 + 1 + 4);
    int horizon_rows = 0;
    for (const auto& row : rep.rows) {
        CHECK(row.pass);
        if (row.check == "measure_map_horizon_ratio") ++horizon_rows;
    }
    CHECK(horizon_rows == 4);
}

TEST_CASE("the structural checks run without a horizon factory") {
    const auto& eq = fixed_point();
    const LemmaReport rep = lemma_checks(eq.model, eq.grid, eq.res.state.flow, 0.5);
    CHECK(rep.rows.size() == 13 * 3 + 1);
    CHECK(rep.pass);
}
