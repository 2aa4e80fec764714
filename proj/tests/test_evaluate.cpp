#include <catch2/catch_amalgamated.hpp>

#include "plumeplace/evaluate.hpp"

using namespace plumeplace;

namespace {

struct Setup {
    SourceField field;
    SensorLayout layout;
    WindPrior wind{1.0, 2.0, -2.0, -1.2};
    NoiseModel noise{0.05};
    PlumeParams params;
};

Setup make_setup() {
    Setup s;
    s.field.sources = {Source{{-4.0, 8.0}, 1.0}, Source{{3.0, 10.0}, 1.0},
                       Source{{0.0, 12.0}, 0.5}};
    s.field.prior.mean = (VectorXd(3) << 5.0, 3.0, 4.0).finished();
    s.field.prior.stddev = (VectorXd(3) << 2.0, 1.0, 1.5).finished();
    s.layout.bounds = Bounds{{-20, -20}, {20, 20}};
    s.layout.coords.resize(2, 2);
    s.layout.coords << -1.0, -3.0, 2.0, -6.0;
    return s;
}

InverseSettings exact_settings() {
    InverseSettings inv;
    inv.lambda1 = 0.01;
    inv.lambda2 = 0.01;
    inv.solver = LowerSolver::Exact;
    return inv;
}

}  // namespace

TEST_CASE("imse_mc: oracle estimator, determinism, dropped samples") {
    const Setup s = make_setup();

    SECTION("injected oracle gives exactly zero") {
        InverseSettings inv = exact_settings();
        inv.solver = LowerSolver::Oracle;
        const ImseEstimate e =
            imse_mc(s.layout, s.field, s.wind, s.noise, s.params, inv, 50, 7);
        CHECK(e.mean == 0.0);
        CHECK(e.std_error == 0.0);
        CHECK(e.count == 50);
    }

    SECTION("same seed reproduces the estimate") {
        const ImseEstimate a =
            imse_mc(s.layout, s.field, s.wind, s.noise, s.params, exact_settings(), 200, 11);
        const ImseEstimate b =
            imse_mc(s.layout, s.field, s.wind, s.noise, s.params, exact_settings(), 200, 11);
        CHECK(a.mean == b.mean);
        CHECK(a.std_error == b.std_error);
        CHECK(a.per_sample == b.per_sample);
    }

    SECTION("standard error formula") {
        const ImseEstimate e =
            imse_mc(s.layout, s.field, s.wind, s.noise, s.params, exact_settings(), 100, 3);
        double mean = 0.0;
        for (double v : e.per_sample) mean += v;
        mean /= 100.0;
        double var = 0.0;
        for (double v : e.per_sample) var += (v - mean) * (v - mean);
        CHECK(e.mean == Catch::Approx(mean).epsilon(1e-12));
        CHECK(e.std_error == Catch::Approx(std::sqrt(var / (100.0 * 99.0))).epsilon(1e-12));
        CHECK(e.mean >= 0.0);
    }

    SECTION("lower-level failures are dropped and reported") {
        InverseSettings inv = exact_settings();
        inv.solver = LowerSolver::Pd;
        inv.pd.step = 1e308;  // overflow on the first inner step
        inv.pd.max_iterations = 5;
        const ImseEstimate e =
            imse_mc(s.layout, s.field, s.wind, s.noise, s.params, inv, 5, 13);
        CHECK(e.dropped == 5);
        CHECK(e.count == 0);
    }

    SECTION("standard error shrinks like 1/sqrt(N)") {
        double se_small = 0.0, se_big = 0.0;
        for (int rep = 0; rep < 10; ++rep) {
            se_small += imse_mc(s.layout, s.field, s.wind, s.noise, s.params, exact_settings(),
                                250, 100 + rep)
                            .std_error;
            se_big += imse_mc(s.layout, s.field, s.wind, s.noise, s.params, exact_settings(),
                              1000, 200 + rep)
                          .std_error;
        }
        CHECK(se_small / se_big == Catch::Approx(2.0).epsilon(0.2));
    }
}

TEST_CASE("exact and long-run primal-dual evaluations agree") {
    const Setup s = make_setup();
    InverseSettings exact = exact_settings();
    InverseSettings pd = exact_settings();
    pd.solver = LowerSolver::Pd;
    // tau sized to the problem: lambda_max(C) stays below ~0.7 here, and the
    // lambda1-flat subspace needs tau * lambda1 * J >> 1 to be traversed
    pd.pd.step = 1.0;
    pd.pd.max_iterations = 100000;
    const ImseEstimate a = imse_mc(s.layout, s.field, s.wind, s.noise, s.params, exact, 150, 21);
    const ImseEstimate b = imse_mc(s.layout, s.field, s.wind, s.noise, s.params, pd, 150, 21);
    const double combined = std::sqrt(a.std_error * a.std_error + b.std_error * b.std_error);
    CHECK(std::abs(a.mean - b.mean) <= std::max(3.0 * combined, 1e-9));
}

TEST_CASE("mape") {
    SECTION("perfect estimates give zero") {
        std::vector<VectorXd> truth = {(VectorXd(2) << 3.0, 4.0).finished()};
        CHECK(mape(truth, truth, 1e-9) == 0.0);
    }

    SECTION("doubling positive rates gives one hundred percent") {
        std::vector<VectorXd> truth = {(VectorXd(3) << 1.0, 2.0, 5.0).finished()};
        std::vector<VectorXd> est = {(VectorXd(3) << 2.0, 4.0, 10.0).finished()};
        CHECK(mape(est, truth, 1e-9) == Catch::Approx(100.0).epsilon(1e-12));
    }

    SECTION("random batch matches an independently computed value") {
        RngStream rng(17);
        std::vector<VectorXd> est, truth;
        for (int i = 0; i < 20; ++i) {
            VectorXd t(4), e(4);
            for (int j = 0; j < 4; ++j) {
                t[j] = rng.uniform(0.0, 10.0);
                e[j] = rng.uniform(0.0, 10.0);
            }
            truth.push_back(t);
            est.push_back(e);
        }
        const double floor = 1e-6 * 10.0;
        double acc = 0.0;
        int terms = 0;
        for (int i = 0; i < 20; ++i)
            for (int j = 0; j < 4; ++j) {
                acc += std::abs(est[static_cast<std::size_t>(i)][j] -
                                truth[static_cast<std::size_t>(i)][j]) /
                       std::max(truth[static_cast<std::size_t>(i)][j], floor);
                ++terms;
            }
        CHECK(mape(est, truth, floor) ==
              Catch::Approx(100.0 * acc / terms).epsilon(1e-12));
    }

    SECTION("shape mismatches are rejected") {
        std::vector<VectorXd> a = {VectorXd::Zero(2)};
        std::vector<VectorXd> b = {VectorXd::Zero(2), VectorXd::Zero(2)};
        CHECK_THROWS_AS(mape(a, b, 1e-9), ConfigError);
    }
}

TEST_CASE("optimality gap bound") {
    SECTION("identical values collapse the gap to zero") {
        std::vector<double> samples(10, 4.2), runs(5, 4.2);
        const GapReport gap = optimality_gap_bound(samples, runs, 0.025);
        CHECK(gap.upper == 4.2);
        CHECK(gap.lower == 4.2);
        CHECK(gap.delta == 0.0);
    }

    SECTION("alpha = 0.5 removes the critical values") {
        std::vector<double> samples = {1.0, 2.0, 3.0, 4.0};
        std::vector<double> runs = {1.5, 2.5};
        const GapReport gap = optimality_gap_bound(samples, runs, 0.5);
        CHECK(gap.upper == Catch::Approx(2.5).margin(1e-12));
        CHECK(gap.lower == Catch::Approx(2.0).margin(1e-12));
        CHECK(gap.delta == Catch::Approx(0.5).margin(1e-12));
    }

    SECTION("arithmetic identity and formulas") {
        std::vector<double> samples = {2.0, 4.0, 9.0, 1.0, 3.5};
        std::vector<double> runs = {2.5, 3.5, 5.0};
        const double alpha = 0.05;
        const GapReport gap = optimality_gap_bound(samples, runs, alpha);
        CHECK(gap.delta == gap.upper - gap.lower);  // exact

        const double mean_n = (2.0 + 4.0 + 9.0 + 1.0 + 3.5) / 5.0;
        double var_n = 0.0;
        for (double v : samples) var_n += (v - mean_n) * (v - mean_n);
        const double se_n = std::sqrt(var_n / (5.0 * 4.0));
        // z_{0.05} = 1.6448536..., t_{0.05, dof 2} = 2.9199856...
        CHECK(gap.upper == Catch::Approx(mean_n + 1.6448536269514722 * se_n).epsilon(1e-9));
        const double mean_k = (2.5 + 3.5 + 5.0) / 3.0;
        double var_k = 0.0;
        for (double v : runs) var_k += (v - mean_k) * (v - mean_k);
        const double se_k = std::sqrt(var_k / (3.0 * 2.0));
        CHECK(gap.lower == Catch::Approx(mean_k - 2.919985580355516 * se_k).epsilon(1e-9));
    }

    SECTION("needs two of each") {
        std::vector<double> one = {1.0};
        std::vector<double> two = {1.0, 2.0};
        CHECK_THROWS_AS(optimality_gap_bound(one, two, 0.1), ConfigError);
        CHECK_THROWS_AS(optimality_gap_bound(two, one, 0.1), ConfigError);
    }
}

TEST_CASE("evaluate_layout couples IMSE and MAPE from one pass") {
    const Setup s = make_setup();
    InverseSettings inv = exact_settings();

    SECTION("oracle mode zeroes both metrics") {
        inv.solver = LowerSolver::Oracle;
        const LayoutReport r =
            evaluate_layout(s.layout, s.field, s.wind, s.noise, s.params, inv, 40, 5);
        CHECK(r.imse.mean == 0.0);
        CHECK(r.mape_percent == 0.0);
    }

    SECTION("report is seed-deterministic and consistent with imse_mc") {
        const LayoutReport r1 =
            evaluate_layout(s.layout, s.field, s.wind, s.noise, s.params, inv, 120, 9);
        const LayoutReport r2 =
            evaluate_layout(s.layout, s.field, s.wind, s.noise, s.params, inv, 120, 9);
        CHECK(r1.imse.mean == r2.imse.mean);
        CHECK(r1.mape_percent == r2.mape_percent);
        const ImseEstimate direct =
            imse_mc(s.layout, s.field, s.wind, s.noise, s.params, inv, 120, 9);
        CHECK(r1.imse.mean == Catch::Approx(direct.mean).epsilon(1e-13));
    }
}
