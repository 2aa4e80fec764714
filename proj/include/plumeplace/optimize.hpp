#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <iostream>
#include <sstream>
#include <vector>

#include "plumeplace/design.hpp"
#include "plumeplace/evaluate.hpp"
#include "plumeplace/hypergrad.hpp"

namespace plumeplace {

/// Elementwise clamp of sensor coordinates to the box; idempotent.
inline MatrixX2d project_box(const MatrixX2d& coords, const Bounds& bounds) {
    bounds.validate();
    MatrixX2d out = coords;
    for (int i = 0; i < out.rows(); ++i) {
        out(i, 0) = std::clamp(out(i, 0), bounds.lo.x(), bounds.hi.x());
        out(i, 1) = std::clamp(out(i, 1), bounds.lo.y(), bounds.hi.y());
    }
    return out;
}

inline SensorLayout project_box(const SensorLayout& layout) {
    return SensorLayout{project_box(layout.coords, layout.bounds), layout.bounds};
}

/// One raw Monte Carlo draw (wind, rates, noise). The forward matrix and
/// observation are instantiated at a given layout, so a fixed draw defines a
/// deterministic objective over layouts (common random numbers).
struct Draw {
    WindSample wind;
    VectorXd theta;
    VectorXd eps;
};

inline Draw sample_draw(const SourceField& field, const WindPrior& wind_prior,
                        const NoiseModel& noise, int n_sensors, std::uint64_t seed,
                        std::uint64_t index) {
    RngStream rng(mix_seed(seed, index));
    Draw d;
    d.wind = sample_wind(wind_prior, rng);
    d.theta = sample_emissions(field.prior, rng);
    d.eps.resize(n_sensors);
    for (int i = 0; i < n_sensors; ++i) d.eps[i] = noise.sigma * rng.normal();
    return d;
}

inline Scenario instantiate(const Draw& d, const SourceField& field, const SensorLayout& layout,
                            const PlumeParams& params) {
    Scenario sc;
    sc.wind = d.wind;
    sc.theta_true = d.theta;
    sc.forward = forward_matrix(field, layout, d.wind, params);
    sc.observation = sc.forward * d.theta + d.eps;
    return sc;
}

/// Deterministic fixed-sample objective Psi_hat over the given draws.
inline double fixed_sample_objective(const std::vector<Draw>& draws, const SourceField& field,
                                     const SensorLayout& layout, const NoiseModel& noise,
                                     const PlumeParams& params, const InverseSettings& settings) {
    std::vector<double> vals(draws.size());
    for (std::size_t i = 0; i < draws.size(); ++i) {
        const Scenario sc = instantiate(draws[i], field, layout, params);
        vals[i] = (estimate_rates(sc, noise, settings) - sc.theta_true).squaredNorm();
    }
    return pairwise_sum(vals) / static_cast<double>(draws.size());
}

/// SGD-based bilevel approximation settings (outer projected SGD, inner
/// augmented primal-dual solves).
struct SbaConfig {
    int outer_iterations = 100;  // M
    double step = 1e-4;          // rho
    bool step_decay = false;     // rho_m = step / (m+1)
    int batch = 10;              // N~ scenarios per outer iteration
    PdSolverConfig inner;        // J, tau, gamma
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    bool warm_start = true;  // keep per-slot (theta, eta) across outer iterations
    /// Differentiate the observation's dependence on the sensor locations
    /// (pathwise gradient); false reproduces the Phi-held-fixed reading.
    bool differentiate_observations = true;
    std::uint64_t seed = 1;
};

struct TrajectoryPoint {
    MatrixX2d coords;
    double batch_objective = 0.0;
    double grad_norm = 0.0;
    int degenerate_count = 0;  // scenarios failing strict complementarity
    double wall_ms = 0.0;
};

/// Per-iteration record; length M+1 (initial point included, final point
/// evaluated against one extra batch).
struct Trajectory {
    std::vector<TrajectoryPoint> points;
};

namespace detail {

struct BatchResult {
    double objective = 0.0;
    Hypergradient grad;
    int degenerate_count = 0;
};

/// Solve all lower-level problems of one batch and assemble the
/// hypergradient at the current layout.
inline BatchResult process_batch(const std::vector<Scenario>& batch, const SourceField& field,
                                 const SensorLayout& layout, const NoiseModel& noise,
                                 const PlumeParams& params, const SbaConfig& cfg,
                                 std::vector<VectorXd>& warm_theta,
                                 std::vector<VectorXd>& warm_eta) {
    const std::size_t count = batch.size();
    std::vector<InverseSolution> solutions(count);
    std::vector<MatrixXd> jacobians(count);
    parallel_for(count, [&](std::size_t i) {
        const Scenario& sc = batch[i];
        const QpProblem qp =
            build_qp(sc.forward, sc.observation, noise, cfg.lambda1, cfg.lambda2);
        InverseSolution sol = (cfg.warm_start && warm_theta[i].size() == qp.dim())
                                  ? solve_pd(qp, warm_theta[i], warm_eta[i], cfg.inner)
                                  : solve_pd(qp, cfg.inner);
        const QpSensitivities sens = qp_sensitivities(field, layout, sc, noise, params,
                                                      cfg.differentiate_observations);
        jacobians[i] = theta_jacobian(qp, sens, sol);
        if (cfg.warm_start) {
            warm_theta[i] = sol.theta;
            warm_eta[i] = sol.eta;
        }
        solutions[i] = std::move(sol);
    });
    BatchResult result;
    std::vector<double> errs(count);
    for (std::size_t i = 0; i < count; ++i)
        errs[i] = (solutions[i].theta - batch[i].theta_true).squaredNorm();
    result.objective = pairwise_sum(errs) / static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
        if (!solutions[i].strict_complementarity) ++result.degenerate_count;
        if (!jacobians[i].allFinite() || !solutions[i].theta.allFinite()) {
            std::ostringstream msg;
            msg << "sba: non-finite hypergradient contribution at scenario " << i
                << " (wind speed " << batch[i].wind.speed << ", direction "
                << batch[i].wind.direction.transpose() << ", |theta_hat| "
                << solutions[i].theta.norm() << ")";
            throw NumericalError(msg.str());
        }
    }
    result.grad = imse_hypergradient(batch, solutions, jacobians);
    return result;
}

}  // namespace detail

/// Algorithm: outer projected SGD on sensor coordinates with per-iteration
/// re-sampled batches (or a fixed draw set when `fixed_draws` is non-null,
/// which makes the run a deterministic bilevel solve on that sample).
using SbaProgress = std::function<void(int, const TrajectoryPoint&)>;

inline std::pair<SensorLayout, Trajectory> sba_run(const SourceField& field,
                                                   const WindPrior& wind_prior,
                                                   const NoiseModel& noise,
                                                   const PlumeParams& params, SensorLayout layout,
                                                   const SbaConfig& cfg,
                                                   const std::vector<Draw>* fixed_draws = nullptr,
                                                   const SbaProgress& progress = {}) {
    if (!layout.feasible())
        throw ConfigError("sba_run: initial layout violates the sensor bounds");
    const int n = layout.size();
    const std::size_t batch_size =
        fixed_draws ? fixed_draws->size() : static_cast<std::size_t>(cfg.batch);
    Trajectory traj;
    traj.points.reserve(static_cast<std::size_t>(cfg.outer_iterations) + 1);
    std::vector<VectorXd> warm_theta(batch_size);
    std::vector<VectorXd> warm_eta(batch_size);

    auto make_batch = [&](int m) {
        std::vector<Scenario> batch(batch_size);
        if (fixed_draws) {
            for (std::size_t i = 0; i < batch.size(); ++i)
                batch[i] = instantiate((*fixed_draws)[i], field, layout, params);
        } else {
            const std::uint64_t batch_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(m));
            parallel_for(batch.size(), [&](std::size_t i) {
                const Draw d = sample_draw(field, wind_prior, noise, n, batch_seed, i);
                batch[i] = instantiate(d, field, layout, params);
            });
        }
        return batch;
    };

    using clock = std::chrono::steady_clock;
    for (int m = 0; m < cfg.outer_iterations; ++m) {
        const auto t0 = clock::now();
        const auto batch = make_batch(m);
        const auto result =
            detail::process_batch(batch, field, layout, noise, params, cfg, warm_theta, warm_eta);
        const double rho = cfg.step_decay ? cfg.step / (m + 1.0) : cfg.step;
        TrajectoryPoint pt;
        pt.coords = layout.coords;
        pt.batch_objective = result.objective;
        pt.grad_norm = result.grad.g.norm();
        pt.degenerate_count = result.degenerate_count;
        pt.wall_ms =
            std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        if (progress) progress(m, pt);
        traj.points.push_back(std::move(pt));

        MatrixX2d next = layout.coords;
        for (int i = 0; i < n; ++i) {
            next(i, 0) -= rho * result.grad.g[2 * i];
            next(i, 1) -= rho * result.grad.g[2 * i + 1];
        }
        layout.coords = project_box(next, layout.bounds);
    }
    // closing record at the final layout
    {
        const auto t0 = clock::now();
        const auto batch = make_batch(cfg.outer_iterations);
        const auto result = detail::process_batch(batch, field, layout, noise, params, cfg,
                                                  warm_theta, warm_eta);
        TrajectoryPoint pt;
        pt.coords = layout.coords;
        pt.batch_objective = result.objective;
        pt.grad_norm = result.grad.g.norm();
        pt.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        traj.points.push_back(std::move(pt));
    }
    return {std::move(layout), std::move(traj)};
}

/// Repeated SAA settings.
struct RsaaConfig {
    int repeats = 250;  // K
    int batch = 5;      // N~ per run
    enum class Subsolver { Grid, MultistartSba } subsolver = Subsolver::Grid;
    double grid_step = 5.0;
    int multistarts = 8;
    SbaConfig sba;  // template for the multistart subsolver
    double alpha = 0.025;
    int eval_samples = 10000;  // N for the upper bound
    InverseSettings inverse;   // lower-level solver for grid search and evaluation
    std::uint64_t seed = 1;
};

struct RsaaResult {
    SensorLayout mean_layout;
    std::vector<MatrixX2d> run_layouts;  // included runs only
    std::vector<double> run_values;      // Psi_hat^k over the run's own draws
    int k_effective = 0;
    GapReport gap;
    ImseEstimate imse_at_mean;
};

namespace detail {

inline std::vector<std::pair<int, int>> free_coordinates(const Bounds& bounds, int n) {
    std::vector<std::pair<int, int>> free;
    for (int i = 0; i < n; ++i)
        for (int a = 0; a < 2; ++a)
            if (bounds.hi[a] > bounds.lo[a]) free.emplace_back(i, a);
    return free;
}

/// Exhaustive lattice search over at most two free coordinates.
inline std::pair<SensorLayout, double> grid_subsolve(const std::vector<Draw>& draws,
                                                     const SourceField& field,
                                                     SensorLayout layout, const NoiseModel& noise,
                                                     const PlumeParams& params,
                                                     const InverseSettings& settings,
                                                     double step) {
    const auto free = free_coordinates(layout.bounds, layout.size());
    if (free.empty() || free.size() > 2)
        throw ConfigError("rsaa grid subsolver requires 1 or 2 free sensor coordinates");
    auto axis_points = [&](int a) {
        std::vector<double> pts;
        for (double v = layout.bounds.lo[a]; v < layout.bounds.hi[a] + 0.5 * step; v += step)
            pts.push_back(std::min(v, layout.bounds.hi[a]));
        return pts;
    };
    double best = std::numeric_limits<double>::infinity();
    MatrixX2d best_coords = layout.coords;
    auto eval = [&]() {
        const double v = fixed_sample_objective(draws, field, layout, noise, params, settings);
        if (v < best) {
            best = v;
            best_coords = layout.coords;
        }
    };
    const auto pts0 = axis_points(free[0].second);
    if (free.size() == 1) {
        for (double v : pts0) {
            layout.coords(free[0].first, free[0].second) = v;
            eval();
        }
    } else {
        const auto pts1 = axis_points(free[1].second);
        for (double v0 : pts0) {
            layout.coords(free[0].first, free[0].second) = v0;
            for (double v1 : pts1) {
                layout.coords(free[1].first, free[1].second) = v1;
                eval();
            }
        }
    }
    return {SensorLayout{best_coords, layout.bounds}, best};
}

}  // namespace detail

/// Algorithm: K repeated small-sample deterministic bilevel solves combined
/// by the coordinate mean, with the SAA optimality-gap report.
inline RsaaResult rsaa_run(const SourceField& field, const WindPrior& wind_prior,
                           const NoiseModel& noise, const PlumeParams& params,
                           const Bounds& bounds, int n_sensors, const RsaaConfig& cfg) {
    if (cfg.repeats < 2) throw ConfigError("rsaa_run: K >= 2 required");
    struct RunOutput {
        bool ok = false;
        MatrixX2d coords;
        double value = 0.0;
    };
    std::vector<RunOutput> runs(static_cast<std::size_t>(cfg.repeats));
    parallel_for(runs.size(), [&](std::size_t k) {
        const std::uint64_t run_seed = mix_seed(cfg.seed, 0xa5a5, k);
        std::vector<Draw> draws(static_cast<std::size_t>(cfg.batch));
        for (std::size_t i = 0; i < draws.size(); ++i)
            draws[i] = sample_draw(field, wind_prior, noise, n_sensors, run_seed, i);
        try {
            if (cfg.subsolver == RsaaConfig::Subsolver::Grid) {
                SensorLayout start;
                start.bounds = bounds;
                start.coords = MatrixX2d::Zero(n_sensors, 2);
                for (int i = 0; i < n_sensors; ++i)
                    start.coords.row(i) = (0.5 * (bounds.lo + bounds.hi)).transpose();
                auto [layout, value] = detail::grid_subsolve(draws, field, start, noise, params,
                                                             cfg.inverse, cfg.grid_step);
                runs[k] = {true, layout.coords, value};
            } else {
                SbaConfig sub = cfg.sba;
                sub.batch = cfg.batch;
                double best = std::numeric_limits<double>::infinity();
                MatrixX2d best_coords;
                for (int ms = 0; ms < std::max(1, cfg.multistarts); ++ms) {
                    RngStream rng(mix_seed(run_seed, 0xbeef, static_cast<std::uint64_t>(ms)));
                    SensorLayout init = random_design(bounds, n_sensors, rng);
                    sub.seed = mix_seed(run_seed, 0xcafe, static_cast<std::uint64_t>(ms));
                    auto [layout, traj] =
                        sba_run(field, wind_prior, noise, params, init, sub, &draws);
                    const double v = fixed_sample_objective(draws, field, layout, noise, params,
                                                            cfg.inverse);
                    if (v < best) {
                        best = v;
                        best_coords = layout.coords;
                    }
                }
                runs[k] = {true, best_coords, best};
            }
        } catch (const std::exception& e) {
            std::cerr << "warning: rsaa run " << k << " excluded: " << e.what() << "\n";
        }
    });

    RsaaResult result;
    for (auto& r : runs) {
        if (!r.ok) continue;
        result.run_layouts.push_back(r.coords);
        result.run_values.push_back(r.value);
    }
    result.k_effective = static_cast<int>(result.run_layouts.size());
    if (result.k_effective < 2)
        throw NumericalError("rsaa_run: fewer than 2 runs completed");

    MatrixX2d mean = MatrixX2d::Zero(n_sensors, 2);
    for (const auto& c : result.run_layouts) mean += c;
    mean /= static_cast<double>(result.k_effective);
    result.mean_layout = SensorLayout{mean, bounds};

    result.imse_at_mean = imse_mc(result.mean_layout, field, wind_prior, noise, params,
                                  cfg.inverse, cfg.eval_samples, mix_seed(cfg.seed, 0xe7a1));
    result.gap =
        optimality_gap_bound(result.imse_at_mean.per_sample, result.run_values, cfg.alpha);
    return result;
}

}  // namespace plumeplace
