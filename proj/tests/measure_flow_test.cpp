#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "timfg/catalog.hpp"
#include "timfg/errors.hpp"
#include "timfg/grid.hpp"
#include "timfg/measure_flow.hpp"
#include "timfg/model.hpp"

using namespace timfg;

namespace {

ModelSpec drift_model(std::function<double(const MeasureStats&)> b) {
    ModelSpec m;
    m.name = "drift_model";
    m.horizon = 1.0;
    m.action_lo = 0.0;
    m.action_hi = 1.0;
    m.drift = [b](double, double, const MeasureStats& mm, double) { return b(mm); };
    m.diffusion = [](double, double, const MeasureStats&) { return 0.5; };
    m.running_reward = [](double, double, const MeasureStats&, double) { return 0.0; };
    m.terminal_reward = [](double, double, const MeasureStats&) { return 0.0; };
    m.discount = [](double) { return 1.0; };
    m.k1_bound = 1.0;
    return m;
}

} // namespace

TEST_CASE("density transport conserves trapezoid mass at every step") {
    const ModelSpec m = catalog_model("lq_mean", 1.0);
    const GridSpec g = build_grid(1.0, 60, -3.0, 3.0, 120, m.action_lo, m.action_hi, 8);
    const auto nu = gaussian_density(g, 0.0, 0.4);
    const MeasureFlow frozen = MeasureFlow::constant(g, nu);
    const MeasureFlow flow =
        solve_fokker_planck(m, g, RelaxedPolicyField::uniform(g), frozen, nu);
    for (int j = 0; j <= g.n_time; ++j) {
        CHECK(flow.mass(j) == Catch::Approx(1.0).margin(1e-10));
        const auto p = flow.density(j);
        for (int i = 0; i <= g.n_space; ++i) CHECK(p[i] >= 0.0);
    }
}

TEST_CASE("pure diffusion grows the variance at rate sigma^2") {
    const ModelSpec m = drift_model([](const MeasureStats&) { return 0.0; });
    const GridSpec g = build_grid(1.0, 100, -4.0, 4.0, 160, 0.0, 1.0, 4);
    const auto nu = gaussian_density(g, 0.0, 0.5);
    const MeasureFlow frozen = MeasureFlow::constant(g, nu);
    const MeasureFlow flow =
        solve_fokker_planck(m, g, RelaxedPolicyField::uniform(g), frozen, nu);
    const double v0 = flow.stats_at(0).variance;
    for (int j : {25, 50, 100}) {
        const double t = g.ts[j];
        const double expected = v0 + 0.25 * t;
        CHECK(flow.stats_at(j).variance == Catch::Approx(expected).epsilon(0.01));
    }
    CHECK(flow.stats_at(100).mean == Catch::Approx(0.0).margin(1e-10));
}

TEST_CASE("constant drift transports the mean linearly") {
    const ModelSpec m = drift_model([](const MeasureStats&) { return 0.3; });
    const GridSpec g = build_grid(1.0, 100, -4.0, 4.0, 160, 0.0, 1.0, 4);
    const auto nu = gaussian_density(g, -0.2, 0.4);
    const MeasureFlow frozen = MeasureFlow::constant(g, nu);
    const MeasureFlow flow =
        solve_fokker_planck(m, g, RelaxedPolicyField::uniform(g), frozen, nu);
    CHECK(flow.stats_at(100).mean == Catch::Approx(-0.2 + 0.3).margin(5e-3));
}

TEST_CASE("coefficients come from the frozen flow, not the transported one") {
    // drift = 0.4 * mean(frozen slice): with the frozen flow pinned at mean
    // 0.8 the transported mean must grow linearly at 0.32, not compound.
    const ModelSpec m = drift_model([](const MeasureStats& mm) { return 0.4 * mm.mean; });
    const GridSpec g = build_grid(1.0, 100, -4.0, 4.0, 160, 0.0, 1.0, 4);
    const auto pinned = gaussian_density(g, 0.8, 0.4);
    const auto nu = gaussian_density(g, 0.5, 0.4);
    const MeasureFlow frozen = MeasureFlow::constant(g, pinned);
    const MeasureFlow flow =
        solve_fokker_planck(m, g, RelaxedPolicyField::uniform(g), frozen, nu);
    CHECK(flow.stats_at(100).mean == Catch::Approx(0.5 + 0.32).margin(0.01));
}

TEST_CASE("transport distance of near-point masses is the node gap") {
    const GridSpec g = build_grid(1.0, 2, -3.0, 3.0, 120, 0.0, 1.0, 4);
    std::vector<double> a(g.xs.size(), 0.0), b(g.xs.size(), 0.0);
    a[30] = 1.0 / g.x_weight(30);
    b[90] = 1.0 / g.x_weight(90);
    const double w2 = wasserstein2_1d(a, b, g);
    CHECK(w2 == Catch::Approx(g.xs[90] - g.xs[30]).margin(g.dx));
}

TEST_CASE("transport distance of Gaussians matches the closed form") {
    const GridSpec g = build_grid(1.0, 2, -4.0, 4.0, 400, 0.0, 1.0, 4);
    const auto a = gaussian_density(g, -0.5, 0.3);
    const auto b = gaussian_density(g, 0.5, 0.45);
    const double expected = std::sqrt(1.0 + 0.15 * 0.15);
    CHECK(wasserstein2_1d(a, b, g) == Catch::Approx(expected).epsilon(0.02));
}

TEST_CASE("transport distance behaves like a metric on the quantile grid") {
    const GridSpec g = build_grid(1.0, 2, -4.0, 4.0, 200, 0.0, 1.0, 4);
    const auto a = gaussian_density(g, -0.8, 0.3);
    const auto b = gaussian_density(g, 0.1, 0.5);
    const auto c = gaussian_density(g, 0.9, 0.35);
    CHECK(wasserstein2_1d(a, a, g) == 0.0);
    CHECK(wasserstein2_1d(a, b, g) == Catch::Approx(wasserstein2_1d(b, a, g)).margin(1e-14));
    CHECK(wasserstein2_1d(a, c, g) <=
          wasserstein2_1d(a, b, g) + wasserstein2_1d(b, c, g) + 1e-12);
}

TEST_CASE("a diffusion flow is half-Hoelder with the predicted constant") {
    const ModelSpec m = drift_model([](const MeasureStats&) { return 0.0; });
    const GridSpec g = build_grid(1.0, 50, -4.0, 4.0, 160, 0.0, 1.0, 4);
    const auto nu = gaussian_density(g, 0.0, 0.5);
    const MeasureFlow frozen = MeasureFlow::constant(g, nu);
    const MeasureFlow flow =
        solve_fokker_planck(m, g, RelaxedPolicyField::uniform(g), frozen, nu);
    const FlowRegularityReport rep = flow_regularity_report(flow, 1.0);
    // Gaussian widening: sup W2^2/|t-s| = sigma^4 T / (4 v0) = 0.0625
    CHECK(rep.holder_sup > 0.03);
    CHECK(rep.holder_sup < 0.10);
    // third absolute moment of N(0, 0.5) at the terminal: 2 sqrt(2/pi) 0.5^1.5
    CHECK(rep.moment_sup == Catch::Approx(0.5642).epsilon(0.05));
}

TEST_CASE("flow construction validates densities") {
    const GridSpec g = build_grid(1.0, 4, -2.0, 2.0, 40, 0.0, 1.0, 4);
    MeasureFlow flow(g);
    std::vector<double> bad(g.xs.size(), 0.0);
    CHECK_THROWS_AS(flow.set_density(0, bad), DensityError); // zero mass
    auto nu = gaussian_density(g, 0.0, 0.4);
    nu[3] = -1e-6;
    CHECK_THROWS_AS(flow.set_density(0, nu), DensityError);
    CHECK_THROWS_AS(flow.density(9), ConfigError);
}

TEST_CASE("copies of a flow keep their own density storage") {
    const GridSpec g = build_grid(1.0, 4, -2.0, 2.0, 40, 0.0, 1.0, 4);
    const auto nu = gaussian_density(g, 0.0, 0.4);
    MeasureFlow a = MeasureFlow::constant(g, nu);
    MeasureFlow b = a;
    const auto shifted = gaussian_density(g, 0.5, 0.4);
    a.set_density(2, shifted);
    CHECK(b.stats_at(2).mean == Catch::Approx(0.0).margin(1e-9));
    // wall clipping shifts the renormalized bump's mean by about 1e-4
    CHECK(a.stats_at(2).mean == Catch::Approx(0.5).margin(1e-3));
}
