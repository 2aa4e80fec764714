#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "plumeplace/scenario.hpp"

using namespace plumeplace;

namespace {

SourceField small_field() {
    SourceField field;
    field.sources = {Source{{0.0, 10.0}, 1.0}, Source{{5.0, 12.0}, 0.5}};
    field.prior.mean = (VectorXd(2) << 4.0, 2.0).finished();
    field.prior.stddev = (VectorXd(2) << 1.0, 1.0).finished();
    return field;
}

SensorLayout line_layout() {
    SensorLayout layout;
    layout.bounds = Bounds{{-20, -20}, {20, 20}};
    layout.coords.resize(2, 2);
    layout.coords << 0.0, 0.0, 4.0, -1.0;
    return layout;
}

}  // namespace

TEST_CASE("sample_wind honors degenerate and boxed priors") {
    SECTION("degenerate prior: due south at speed 5") {
        WindPrior prior{5.0, 5.0, -1.5707963267948966, -1.5707963267948966};
        RngStream rng(3);
        const WindSample w = sample_wind(prior, rng);
        CHECK(w.speed == 5.0);
        CHECK(w.direction.x() == Catch::Approx(0.0).margin(1e-12));
        CHECK(w.direction.y() == Catch::Approx(-1.0).margin(1e-12));
        CHECK(w.beta().y() == Catch::Approx(-5.0).margin(1e-9));
        CHECK(w.direction.norm() == Catch::Approx(1.0).margin(1e-12));
    }

    SECTION("uniform speed in [1,2]: empirical mean 1.5") {
        WindPrior prior{1.0, 2.0, -2.35619449019, -0.785398163397};  // NW..NE arc (toward)
        RngStream rng(17);
        double sum = 0.0;
        const int draws = 100000;
        for (int i = 0; i < draws; ++i) {
            const WindSample w = sample_wind(prior, rng);
            sum += w.speed;
            REQUIRE(w.speed >= 1.0);
            REQUIRE(w.speed <= 2.0);
            REQUIRE(w.direction.norm() == Catch::Approx(1.0).margin(1e-12));
        }
        CHECK(sum / draws == Catch::Approx(1.5).margin(0.01));
    }
}

TEST_CASE("sample_emissions: degenerate, half-normal, sparse-leak") {
    RngStream rng(11);

    SECTION("vanishing spread returns the mean exactly") {
        EmissionPrior prior;
        prior.mean = (VectorXd(3) << 1.0, 2.0, 0.5).finished();
        prior.stddev = VectorXd::Constant(3, 1e-30);
        const VectorXd theta = sample_emissions(prior, rng);
        CHECK((theta - prior.mean).lpNorm<Eigen::Infinity>() < 1e-9);
    }

    SECTION("zero-mean unit-variance truncation has half-normal moments") {
        EmissionPrior prior;
        prior.mean = VectorXd::Zero(1);
        prior.stddev = VectorXd::Ones(1);
        double sum = 0.0;
        const int draws = 100000;
        for (int i = 0; i < draws; ++i) sum += sample_emissions(prior, rng)[0];
        CHECK(sum / draws == Catch::Approx(0.7978845608028654).epsilon(0.02));
    }

    SECTION("leak probability zero gives the zero vector") {
        EmissionPrior prior;
        prior.mode = EmissionMode::SparseLeak;
        prior.leak_probability = 0.0;
        prior.mean = VectorXd::Constant(4, 3.0);
        prior.stddev = VectorXd::Ones(4);
        for (int i = 0; i < 100; ++i) CHECK(sample_emissions(prior, rng).isZero(0.0));
    }

    SECTION("nonnegativity over many draws") {
        EmissionPrior prior;
        prior.mean = (VectorXd(2) << 0.0, 1.0).finished();
        prior.stddev = (VectorXd(2) << 2.0, 0.5).finished();
        for (int i = 0; i < 100000; ++i)
            REQUIRE((sample_emissions(prior, rng).array() >= 0.0).all());
    }

    SECTION("truncated-normal sample moments match the analytic value") {
        // mean for mu = 9, sigma = 20 truncated at zero (independent oracle)
        EmissionPrior prior;
        prior.mean = VectorXd::Constant(1, 9.0);
        prior.stddev = VectorXd::Constant(1, 20.0);
        double sum = 0.0;
        const int draws = 200000;
        for (int i = 0; i < draws; ++i) sum += sample_emissions(prior, rng)[0];
        // 3-sigma band of the standard error (sd < 20)
        CHECK(std::abs(sum / draws - 19.70377069100838) < 3.0 * 20.0 / std::sqrt(draws));
    }
}

TEST_CASE("sample_batch: determinism and degenerate limits") {
    const SourceField field = small_field();
    const SensorLayout layout = line_layout();
    const WindPrior wind{1.5, 1.5, -1.6, -1.6};
    const PlumeParams params;

    SECTION("degenerate priors with vanishing noise reproduce F theta") {
        SourceField degen = field;
        degen.prior.stddev = VectorXd::Constant(2, 1e-30);
        const auto batch =
            sample_batch(1, degen, layout, wind, NoiseModel{1e-12}, params, 99);
        REQUIRE(batch.size() == 1);
        const auto& sc = batch[0];
        CHECK((sc.observation - sc.forward * sc.theta_true).lpNorm<Eigen::Infinity>() < 1e-9);
        CHECK((sc.theta_true - degen.prior.mean).lpNorm<Eigen::Infinity>() < 1e-9);
        CHECK(sc.observation.size() == layout.size());
        CHECK(sc.theta_true.size() == field.size());
    }

    SECTION("same seed gives identical batches, different seeds differ") {
        const auto a = sample_batch(16, field, layout, wind, NoiseModel{0.1}, params, 7);
        const auto b = sample_batch(16, field, layout, wind, NoiseModel{0.1}, params, 7);
        const auto c = sample_batch(16, field, layout, wind, NoiseModel{0.1}, params, 8);
        REQUIRE(a.size() == b.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].observation == b[i].observation);
            CHECK(a[i].theta_true == b[i].theta_true);
            CHECK(a[i].wind.speed == b[i].wind.speed);
        }
        bool any_diff = false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].observation != c[i].observation) any_diff = true;
        CHECK(any_diff);
    }

    SECTION("thread count does not change the batch") {
        set_max_threads(1);
        const auto a = sample_batch(9, field, layout, wind, NoiseModel{0.1}, params, 31);
        set_max_threads(4);
        const auto b = sample_batch(9, field, layout, wind, NoiseModel{0.1}, params, 31);
        set_max_threads(0);
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].observation == b[i].observation);
    }

    SECTION("noise recovery from the scenario") {
        const auto batch = sample_batch(3, field, layout, wind, NoiseModel{0.5}, params, 12);
        for (const auto& sc : batch) {
            const VectorXd eps = sc.noise_draw();
            CHECK(((sc.forward * sc.theta_true + eps) - sc.observation)
                      .lpNorm<Eigen::Infinity>() < 1e-12);
        }
    }
}
