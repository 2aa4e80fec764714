#include <catch2/catch_amalgamated.hpp>

#include "plumeplace/optimize.hpp"

using namespace plumeplace;

namespace {

struct Setup {
    SourceField field;
    WindPrior wind{1.0, 2.0, -2.0, -1.2};
    NoiseModel noise{0.05};
    PlumeParams params;
    Bounds box{{-20, -20}, {20, 20}};
};

Setup make_setup() {
    Setup s;
    s.field.sources = {Source{{-4.0, 8.0}, 1.0}, Source{{3.0, 10.0}, 1.0},
                       Source{{0.0, 12.0}, 0.5}};
    s.field.prior.mean = (VectorXd(3) << 5.0, 3.0, 4.0).finished();
    s.field.prior.stddev = (VectorXd(3) << 2.0, 1.0, 1.5).finished();
    return s;
}

SensorLayout start_layout(const Setup& s) {
    SensorLayout l;
    l.bounds = s.box;
    l.coords.resize(2, 2);
    l.coords << -2.0, -5.0, 4.0, -8.0;
    return l;
}

SbaConfig small_sba() {
    SbaConfig cfg;
    cfg.outer_iterations = 8;
    cfg.step = 1e-4;
    cfg.batch = 6;
    cfg.inner.step = 2e-3;
    cfg.inner.max_iterations = 300;
    cfg.lambda1 = 0.01;
    cfg.lambda2 = 0.01;
    cfg.seed = 42;
    return cfg;
}

}  // namespace

TEST_CASE("project_box") {
    const Bounds box{{0.0, -1.0}, {2.0, 1.0}};
    MatrixX2d pts(3, 2);
    pts << 1.0, 0.0, 5.0, 2.0, -3.0, -9.0;
    const MatrixX2d clamped = project_box(pts, box);
    CHECK(clamped.row(0) == pts.row(0));  // interior untouched
    CHECK(clamped(1, 0) == 2.0);
    CHECK(clamped(1, 1) == 1.0);
    CHECK(clamped(2, 0) == 0.0);
    CHECK(clamped(2, 1) == -1.0);
    CHECK(project_box(clamped, box) == clamped);  // idempotent

    const Bounds bad{{1.0, 0.0}, {0.0, 1.0}};
    CHECK_THROWS_AS(project_box(pts, bad), ConfigError);
}

TEST_CASE("sba_run: trivial and structural properties") {
    const Setup s = make_setup();

    SECTION("zero outer step leaves the layout at the initial point") {
        SbaConfig cfg = small_sba();
        cfg.step = 0.0;
        const auto [final_layout, traj] =
            sba_run(s.field, s.wind, s.noise, s.params, start_layout(s), cfg);
        CHECK(final_layout.coords == start_layout(s).coords);
        REQUIRE(traj.points.size() == static_cast<std::size_t>(cfg.outer_iterations) + 1);
        for (const auto& pt : traj.points) CHECK(pt.coords == start_layout(s).coords);
    }

    SECTION("trajectory stays feasible and is seed-deterministic") {
        SbaConfig cfg = small_sba();
        const auto [l1, t1] = sba_run(s.field, s.wind, s.noise, s.params, start_layout(s), cfg);
        const auto [l2, t2] = sba_run(s.field, s.wind, s.noise, s.params, start_layout(s), cfg);
        CHECK(l1.coords == l2.coords);
        REQUIRE(t1.points.size() == t2.points.size());
        for (std::size_t m = 0; m < t1.points.size(); ++m) {
            CHECK(t1.points[m].coords == t2.points[m].coords);
            CHECK(t1.points[m].batch_objective == t2.points[m].batch_objective);
            CHECK(SensorLayout{t1.points[m].coords, s.box}.feasible());
        }
    }

    SECTION("thread count does not change the run") {
        SbaConfig cfg = small_sba();
        set_max_threads(1);
        const auto [l1, t1] = sba_run(s.field, s.wind, s.noise, s.params, start_layout(s), cfg);
        set_max_threads(4);
        const auto [l2, t2] = sba_run(s.field, s.wind, s.noise, s.params, start_layout(s), cfg);
        set_max_threads(0);
        CHECK(l1.coords == l2.coords);
        for (std::size_t m = 0; m < t1.points.size(); ++m)
            CHECK(t1.points[m].batch_objective == t2.points[m].batch_objective);
    }

    SECTION("all sensors upwind: zero hypergradient fixes the layout") {
        Setup upwind = make_setup();
        // degenerate due-south wind, sensors strictly north of every source
        upwind.wind = WindPrior{1.5, 1.5, -1.5707963267948966, -1.5707963267948966};
        SensorLayout l;
        l.bounds = Bounds{{-20, 15}, {20, 20}};
        l.coords.resize(2, 2);
        l.coords << -5.0, 18.0, 5.0, 19.0;
        SbaConfig cfg = small_sba();
        cfg.step = 1.0;
        const auto [final_layout, traj] =
            sba_run(upwind.field, upwind.wind, upwind.noise, upwind.params, l, cfg);
        CHECK(final_layout.coords == l.coords);
        for (const auto& pt : traj.points) CHECK(pt.grad_norm == 0.0);
    }

    SECTION("decayed steps follow rho_0/(m+1) exactly") {
        SbaConfig cfg = small_sba();
        cfg.step_decay = true;
        cfg.step = 2e-4;
        cfg.outer_iterations = 6;
        const auto [final_layout, traj] =
            sba_run(s.field, s.wind, s.noise, s.params, start_layout(s), cfg);
        for (int m = 0; m < cfg.outer_iterations; ++m) {
            const auto& now = traj.points[static_cast<std::size_t>(m)];
            const auto& next = traj.points[static_cast<std::size_t>(m) + 1];
            const MatrixX2d step = next.coords - now.coords;
            // no clamping happened in this configuration, so the step length
            // is exactly rho_m * ||g||
            if (now.grad_norm > 0.0) {
                const double rho_eff = step.norm() / now.grad_norm;
                CHECK(rho_eff == Catch::Approx(cfg.step / (m + 1.0)).epsilon(1e-9));
            }
        }
    }

    SECTION("infeasible initial layout is rejected before any iteration") {
        SensorLayout bad = start_layout(s);
        bad.coords(0, 0) = 100.0;
        CHECK_THROWS_AS(sba_run(s.field, s.wind, s.noise, s.params, bad, small_sba()),
                        ConfigError);
    }
}

TEST_CASE("rsaa_run: near-degenerate sample sets and the combine rule") {
    Setup s = make_setup();
    // degenerate priors and near-zero noise: every run sees essentially the
    // same deterministic problem, and the grid quantizes away what remains
    s.field.prior.stddev = VectorXd::Constant(3, 1e-30);
    s.wind = WindPrior{1.5, 1.5, -1.5707963267948966, -1.5707963267948966};
    s.noise = NoiseModel{1e-4};

    RsaaConfig cfg;
    cfg.repeats = 6;
    cfg.batch = 3;
    cfg.subsolver = RsaaConfig::Subsolver::Grid;
    cfg.grid_step = 2.0;
    cfg.alpha = 0.025;
    cfg.eval_samples = 50;
    cfg.inverse.lambda1 = 0.01;
    cfg.inverse.lambda2 = 0.01;
    cfg.seed = 31;

    // one free coordinate: a vertical line through the plume fan
    const Bounds line{{0.0, -20.0}, {0.0, -2.0}};

    const RsaaResult r = rsaa_run(s.field, s.wind, s.noise, s.params, line, 1, cfg);
    REQUIRE(r.k_effective == 6);
    for (const auto& coords : r.run_layouts) CHECK(coords == r.run_layouts[0]);
    CHECK(r.mean_layout.coords == r.run_layouts[0]);
    for (double v : r.run_values)
        CHECK(v == Catch::Approx(r.run_values[0]).epsilon(1e-3).margin(1e-9));
    // sigma_{N~,K} ~ 0 so the lower bound sits at the run mean
    const double run_mean =
        (r.run_values[0] + r.run_values[1] + r.run_values[2] + r.run_values[3] +
         r.run_values[4] + r.run_values[5]) /
        6.0;
    CHECK(r.gap.lower == Catch::Approx(run_mean).margin(0.01));
    CHECK(r.gap.delta == r.gap.upper - r.gap.lower);
}

TEST_CASE("rsaa_run: mean combine over scattered runs") {
    const Setup s = make_setup();
    RsaaConfig cfg;
    cfg.repeats = 8;
    cfg.batch = 2;
    cfg.subsolver = RsaaConfig::Subsolver::Grid;
    cfg.grid_step = 1.0;
    cfg.eval_samples = 40;
    cfg.inverse.lambda1 = 0.01;
    cfg.inverse.lambda2 = 0.01;
    cfg.seed = 77;
    const Bounds line{{-10.0, -6.0}, {10.0, -6.0}};  // free x, pinned y

    const RsaaResult r = rsaa_run(s.field, s.wind, s.noise, s.params, line, 1, cfg);
    REQUIRE(r.k_effective == 8);
    MatrixX2d mean = MatrixX2d::Zero(1, 2);
    for (const auto& c : r.run_layouts) mean += c;
    mean /= 8.0;
    CHECK(r.mean_layout.coords.isApprox(mean, 1e-15));
    CHECK(r.gap.repeats == 8);
    CHECK(r.gap.samples == 40);

    RsaaConfig bad = cfg;
    bad.repeats = 1;
    CHECK_THROWS_AS(rsaa_run(s.field, s.wind, s.noise, s.params, line, 1, bad), ConfigError);
}

TEST_CASE("rsaa_run with the multistart subsolver") {
    const Setup s = make_setup();
    RsaaConfig cfg;
    cfg.repeats = 3;
    cfg.batch = 3;
    cfg.subsolver = RsaaConfig::Subsolver::MultistartSba;
    cfg.multistarts = 2;
    cfg.sba = SbaConfig{};
    cfg.sba.outer_iterations = 5;
    cfg.sba.step = 1e-4;
    cfg.sba.inner.step = 2e-3;
    cfg.sba.inner.max_iterations = 200;
    cfg.sba.lambda1 = 0.01;
    cfg.sba.lambda2 = 0.01;
    cfg.eval_samples = 30;
    cfg.inverse.lambda1 = 0.01;
    cfg.inverse.lambda2 = 0.01;
    cfg.seed = 5;
    const Bounds box{{-10, -12}, {10, -2}};

    const RsaaResult r = rsaa_run(s.field, s.wind, s.noise, s.params, box, 2, cfg);
    CHECK(r.k_effective == 3);
    CHECK(r.mean_layout.feasible());
    CHECK(r.run_values.size() == 3);
}

TEST_CASE("fixed draws make sba_run a deterministic descent") {
    const Setup s = make_setup();
    std::vector<Draw> draws;
    for (int i = 0; i < 5; ++i)
        draws.push_back(sample_draw(s.field, s.wind, s.noise, 2, 99, i));
    SbaConfig cfg = small_sba();
    cfg.outer_iterations = 12;
    const auto [l1, t1] =
        sba_run(s.field, s.wind, s.noise, s.params, start_layout(s), cfg, &draws);
    const auto [l2, t2] =
        sba_run(s.field, s.wind, s.noise, s.params, start_layout(s), cfg, &draws);
    CHECK(l1.coords == l2.coords);
    // the fixed-sample objective at the final point does not exceed the start
    const double v0 = fixed_sample_objective(draws, s.field, start_layout(s), s.noise, s.params,
                                             InverseSettings{0.01, 0.01, LowerSolver::Exact, {}});
    const double v1 = fixed_sample_objective(draws, s.field, l1, s.noise, s.params,
                                             InverseSettings{0.01, 0.01, LowerSolver::Exact, {}});
    CHECK(v1 <= v0 * 1.05);
}
