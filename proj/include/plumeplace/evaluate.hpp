#pragma once

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <iostream>
#include <optional>
#include <span>
#include <vector>

#include "plumeplace/inverse.hpp"
#include "plumeplace/parallel.hpp"
#include "plumeplace/scenario.hpp"

namespace plumeplace {

/// How the lower-level problem is solved during evaluation.
enum class LowerSolver {
    Exact,  // active-set / enumeration KKT point
    Pd,     // augmented primal-dual iterations
    Oracle  // theta_hat := theta_true (diagnostic)
};

struct InverseSettings {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    LowerSolver solver = LowerSolver::Exact;
    PdSolverConfig pd;
};

/// Solve one scenario's inverse problem under the given settings.
inline VectorXd estimate_rates(const Scenario& sc, const NoiseModel& noise,
                               const InverseSettings& settings) {
    if (settings.solver == LowerSolver::Oracle) return sc.theta_true;
    const QpProblem qp =
        build_qp(sc.forward, sc.observation, noise, settings.lambda1, settings.lambda2);
    if (settings.solver == LowerSolver::Exact) return solve_exact(qp).theta;
    return solve_pd(qp, settings.pd).theta;
}

/// Monte Carlo IMSE estimate with its standard error.
struct ImseEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    int count = 0;    // effective samples
    int dropped = 0;  // samples lost to lower-level failures
    std::vector<double> per_sample;
};

namespace detail {

struct SamplePass {
    std::vector<double> squared_errors;
    std::vector<VectorXd> estimates;
    std::vector<VectorXd> truths;
    int dropped = 0;
};

inline SamplePass run_sample_pass(const SensorLayout& layout, const SourceField& field,
                                  const WindPrior& wind_prior, const NoiseModel& noise,
                                  const PlumeParams& params, const InverseSettings& settings,
                                  int count, std::uint64_t seed, bool keep_vectors) {
    std::vector<std::optional<double>> values(static_cast<std::size_t>(count));
    std::vector<VectorXd> est(static_cast<std::size_t>(count)), tru(static_cast<std::size_t>(count));
    parallel_for(static_cast<std::size_t>(count), [&](std::size_t i) {
        const Scenario sc = sample_scenario(field, layout, wind_prior, noise, params, seed, i);
        try {
            const VectorXd theta_hat = estimate_rates(sc, noise, settings);
            values[i] = (theta_hat - sc.theta_true).squaredNorm();
            if (keep_vectors) {
                est[i] = theta_hat;
                tru[i] = sc.theta_true;
            }
        } catch (const NumericalError& e) {
            std::cerr << "warning: sample " << i << " dropped: " << e.what() << "\n";
        }
    });
    SamplePass pass;
    for (int i = 0; i < count; ++i) {
        const auto& v = values[static_cast<std::size_t>(i)];
        if (!v) {
            ++pass.dropped;
            continue;
        }
        pass.squared_errors.push_back(*v);
        if (keep_vectors) {
            pass.estimates.push_back(est[static_cast<std::size_t>(i)]);
            pass.truths.push_back(tru[static_cast<std::size_t>(i)]);
        }
    }
    return pass;
}

inline ImseEstimate summarize(std::vector<double> values, int dropped, bool keep_samples) {
    ImseEstimate e;
    e.count = static_cast<int>(values.size());
    e.dropped = dropped;
    if (e.count == 0) return e;
    e.mean = pairwise_sum(values) / e.count;
    if (e.count > 1) {
        std::vector<double> sq(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double d = values[i] - e.mean;
            sq[i] = d * d;
        }
        e.std_error = std::sqrt(pairwise_sum(sq) / (static_cast<double>(e.count) * (e.count - 1)));
    }
    if (keep_samples) e.per_sample = std::move(values);
    return e;
}

}  // namespace detail

/// Monte Carlo estimate of the IMSE objective (Psi_hat_N) at a fixed layout.
inline ImseEstimate imse_mc(const SensorLayout& layout, const SourceField& field,
                            const WindPrior& wind_prior, const NoiseModel& noise,
                            const PlumeParams& params, const InverseSettings& settings, int count,
                            std::uint64_t seed, bool keep_samples = true) {
    auto pass = detail::run_sample_pass(layout, field, wind_prior, noise, params, settings, count,
                                        seed, false);
    return detail::summarize(std::move(pass.squared_errors), pass.dropped, keep_samples);
}

/// Mean absolute percentage error over samples and sources; `floor` guards
/// near-zero true rates.
inline double mape(std::span<const VectorXd> estimates, std::span<const VectorXd> truths,
                   double floor) {
    if (estimates.size() != truths.size())
        throw ConfigError("mape: estimate/truth count mismatch");
    double total = 0.0;
    std::size_t terms = 0;
    for (std::size_t i = 0; i < estimates.size(); ++i) {
        if (estimates[i].size() != truths[i].size())
            throw ConfigError("mape: estimate/truth dimension mismatch");
        for (int j = 0; j < truths[i].size(); ++j) {
            total += std::abs(estimates[i][j] - truths[i][j]) / std::max(truths[i][j], floor);
            ++terms;
        }
    }
    return terms == 0 ? 0.0 : 100.0 * total / static_cast<double>(terms);
}

/// IMSE + MAPE of a layout from one shared sample pass.
struct LayoutReport {
    ImseEstimate imse;
    double mape_percent = 0.0;
    double mape_floor = 0.0;
};

inline LayoutReport evaluate_layout(const SensorLayout& layout, const SourceField& field,
                                    const WindPrior& wind_prior, const NoiseModel& noise,
                                    const PlumeParams& params, const InverseSettings& settings,
                                    int count, std::uint64_t seed, bool keep_samples = false) {
    auto pass = detail::run_sample_pass(layout, field, wind_prior, noise, params, settings, count,
                                        seed, true);
    LayoutReport report;
    double max_rate = 0.0;
    for (const auto& t : pass.truths) max_rate = std::max(max_rate, t.maxCoeff());
    report.mape_floor = std::max(1e-6 * max_rate, 1e-12);
    report.mape_percent = mape(pass.estimates, pass.truths, report.mape_floor);
    report.imse = detail::summarize(std::move(pass.squared_errors), pass.dropped, keep_samples);
    return report;
}

/// Stochastic optimality-gap bound of Eq-style SAA analysis:
///   upper = Psi_hat_N + z_alpha * se_N       (normal critical value)
///   lower = Psi_bar   - t_alpha * se_{N~,K}  (Student-t, K-1 dof)
struct GapReport {
    double upper = 0.0;
    double lower = 0.0;
    double delta = 0.0;  // upper - lower, exactly
    double alpha = 0.0;
    int repeats = 0;  // K
    int samples = 0;  // N
};

inline GapReport optimality_gap_bound(std::span<const double> per_sample_values,
                                      std::span<const double> per_run_values, double alpha) {
    const int n = static_cast<int>(per_sample_values.size());
    const int k = static_cast<int>(per_run_values.size());
    if (n < 2 || k < 2) throw ConfigError("optimality_gap_bound: need N >= 2 and K >= 2");
    const double mean_n = pairwise_sum(per_sample_values) / n;
    double var_n = 0.0;
    for (double v : per_sample_values) var_n += (v - mean_n) * (v - mean_n);
    const double se_n = std::sqrt(var_n / (static_cast<double>(n) * (n - 1)));
    const double mean_k = pairwise_sum(per_run_values) / k;
    double var_k = 0.0;
    for (double v : per_run_values) var_k += (v - mean_k) * (v - mean_k);
    const double se_k = std::sqrt(var_k / (static_cast<double>(k) * (k - 1)));

    const double z = boost::math::quantile(boost::math::normal_distribution<>(), 1.0 - alpha);
    const double t =
        boost::math::quantile(boost::math::students_t_distribution<>(k - 1), 1.0 - alpha);
    GapReport gap;
    gap.alpha = alpha;
    gap.repeats = k;
    gap.samples = n;
    gap.upper = mean_n + z * se_n;
    gap.lower = mean_k - t * se_k;
    gap.delta = gap.upper - gap.lower;
    return gap;
}

}  // namespace plumeplace
