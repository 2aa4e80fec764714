#pragma once

#include <Eigen/Cholesky>
#include <algorithm>
#include <span>
#include <vector>

#include "plumeplace/parallel.hpp"
#include "plumeplace/plume.hpp"
#include "plumeplace/rng.hpp"
#include "plumeplace/scenario.hpp"

namespace plumeplace {

/// Diagonal linear-Gaussian prior used by the closed-form Bayes risk.
/// The implied factors are L = diag(1/stddev) (L'L = Gamma_pr^-1) and
/// U = sigma_eps^-1 I (U'U = Gamma_eps^-1).
struct LinearGaussianPrior {
    VectorXd mean;
    VectorXd stddev;  // > 0 elementwise

    static LinearGaussianPrior from_emission_prior(const EmissionPrior& p) {
        return {p.mean, p.stddev};
    }
};

/// Closed-form linear-Gaussian Bayes risk of one wind realization:
///   || Gamma_post L' ||_F^2 + || Gamma_post F' U' ||_F^2
/// with Gamma_post = (F' Gamma_eps^-1 F + Gamma_pr^-1)^-1.
inline double linear_gaussian_risk(const MatrixXd& F, const LinearGaussianPrior& prior,
                                   const NoiseModel& noise) {
    const int np = static_cast<int>(prior.stddev.size());
    const double inv_var = 1.0 / (noise.sigma * noise.sigma);
    MatrixXd info = inv_var * (F.transpose() * F);
    for (int j = 0; j < np; ++j) info(j, j) += 1.0 / (prior.stddev[j] * prior.stddev[j]);
    const MatrixXd post = info.llt().solve(MatrixXd::Identity(np, np));
    double term1 = 0.0;
    for (int j = 0; j < np; ++j)
        term1 += post.col(j).squaredNorm() / (prior.stddev[j] * prior.stddev[j]);
    const double term2 = inv_var * (post * F.transpose()).squaredNorm();
    return term1 + term2;
}

/// Wind-averaged A-optimal (Bayes-risk) criterion for a layout.
inline double a_optimal_risk(const SensorLayout& layout, const SourceField& field,
                             const LinearGaussianPrior& prior,
                             std::span<const WindSample> wind_samples, const NoiseModel& noise,
                             const PlumeParams& params) {
    std::vector<double> vals(wind_samples.size());
    for (std::size_t w = 0; w < wind_samples.size(); ++w) {
        const MatrixXd F = forward_matrix(field, layout, wind_samples[w], params);
        vals[w] = linear_gaussian_risk(F, prior, noise);
    }
    return pairwise_sum(vals) / static_cast<double>(wind_samples.size());
}

/// Settings shared by the initial-design constructors.
struct DesignConfig {
    int wind_samples = 32;  // SAA wind set for the averaged risk
    int multistarts = 16;   // starts of the coordinate descent
    int max_sweeps = 40;    // coordinate-descent sweeps per start
    int kmeans_points = 10000;
    int grid = 100;  // concentration-mass grid resolution per axis
    int kmeans_iterations = 100;
};

inline std::vector<WindSample> draw_wind_set(const WindPrior& prior, int count,
                                             std::uint64_t seed) {
    std::vector<WindSample> winds(static_cast<std::size_t>(count));
    for (int w = 0; w < count; ++w) {
        RngStream rng(mix_seed(seed, static_cast<std::uint64_t>(w)));
        winds[static_cast<std::size_t>(w)] = sample_wind(prior, rng);
    }
    return winds;
}

/// i.i.d. uniform layout in the box.
inline SensorLayout random_design(const Bounds& bounds, int n, RngStream& rng) {
    bounds.validate();
    SensorLayout layout;
    layout.bounds = bounds;
    layout.coords.resize(n, 2);
    for (int i = 0; i < n; ++i) {
        layout.coords(i, 0) = rng.uniform(bounds.lo.x(), bounds.hi.x());
        layout.coords(i, 1) = rng.uniform(bounds.lo.y(), bounds.hi.y());
    }
    return layout;
}

namespace detail {

/// Projected coordinate descent with central-difference partials and
/// per-coordinate backtracking; returns the final risk value.
template <class RiskFn>
double coordinate_descent(MatrixX2d& coords, const Bounds& bounds, RiskFn&& risk,
                          int max_sweeps) {
    const Vector2d span = bounds.hi - bounds.lo;
    double current = risk(coords);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        bool moved = false;
        for (int i = 0; i < coords.rows(); ++i) {
            for (int a = 0; a < 2; ++a) {
                const double width = span[a];
                if (width <= 0.0) continue;  // pinned coordinate
                const double h = 1e-4 * width;
                const double lo = bounds.lo[a], hi = bounds.hi[a];
                const double base = coords(i, a);
                auto eval_at = [&](double v) {
                    coords(i, a) = std::clamp(v, lo, hi);
                    const double r = risk(coords);
                    coords(i, a) = base;
                    return r;
                };
                const double g = (eval_at(base + h) - eval_at(base - h)) / (2.0 * h);
                if (g == 0.0) continue;
                double step = 0.05 * width;
                for (int bt = 0; bt < 12; ++bt) {
                    const double cand = std::clamp(base - step * (g > 0 ? 1.0 : -1.0), lo, hi);
                    if (cand == base) {
                        step *= 0.5;
                        continue;
                    }
                    const double r = eval_at(cand);
                    if (r < current * (1.0 - 1e-12)) {
                        coords(i, a) = cand;
                        current = r;
                        moved = true;
                        break;
                    }
                    step *= 0.5;
                }
            }
        }
        if (!moved) break;
    }
    return current;
}

}  // namespace detail

/// Wind-averaged A-optimal initial design: multistart projected coordinate
/// descent on the closed-form risk over a fixed wind-sample set. The output
/// risk never exceeds the risk of the best multistart initial point.
inline SensorLayout a_optimal_design(const SourceField& field, const LinearGaussianPrior& prior,
                                     const WindPrior& wind_prior, const Bounds& bounds, int n,
                                     const NoiseModel& noise, const PlumeParams& params,
                                     const DesignConfig& cfg, std::uint64_t seed) {
    bounds.validate();
    const auto winds = draw_wind_set(wind_prior, cfg.wind_samples, mix_seed(seed, 0x77));
    auto risk_of = [&](const MatrixX2d& coords) {
        SensorLayout l{coords, bounds};
        return a_optimal_risk(l, field, prior, winds, noise, params);
    };

    const int starts = std::max(1, cfg.multistarts);
    std::vector<MatrixX2d> results(static_cast<std::size_t>(starts));
    std::vector<double> values(static_cast<std::size_t>(starts));
    parallel_for(static_cast<std::size_t>(starts), [&](std::size_t k) {
        RngStream rng(mix_seed(seed, 0x1000 + k));
        MatrixX2d coords = random_design(bounds, n, rng).coords;
        values[k] = detail::coordinate_descent(coords, bounds, risk_of, cfg.max_sweeps);
        results[k] = std::move(coords);
    });
    std::size_t best = 0;
    for (std::size_t k = 1; k < results.size(); ++k)
        if (values[k] < values[best]) best = k;
    return SensorLayout{results[best], bounds};
}

/// Plain Lloyd iterations from explicit initial centroids; exposed so an
/// independent clustering can be run on the same inputs.
inline MatrixX2d kmeans_lloyd(const MatrixX2d& points, MatrixX2d centroids, int iterations) {
    const int k = static_cast<int>(centroids.rows());
    std::vector<int> assign(static_cast<std::size_t>(points.rows()), 0);
    for (int it = 0; it < iterations; ++it) {
        bool changed = false;
        for (int p = 0; p < points.rows(); ++p) {
            int best = 0;
            double best_d = (points.row(p) - centroids.row(0)).squaredNorm();
            for (int c = 1; c < k; ++c) {
                const double d = (points.row(p) - centroids.row(c)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[static_cast<std::size_t>(p)] != best) {
                assign[static_cast<std::size_t>(p)] = best;
                changed = true;
            }
        }
        MatrixX2d sums = MatrixX2d::Zero(k, 2);
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int p = 0; p < points.rows(); ++p) {
            sums.row(assign[static_cast<std::size_t>(p)]) += points.row(p);
            ++counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(p)])];
        }
        for (int c = 0; c < k; ++c)
            if (counts[static_cast<std::size_t>(c)] > 0)
                centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
        if (!changed && it > 0) break;
    }
    return centroids;
}

/// Points sampled proportional to the wind-averaged mean concentration field
/// sum_j mu_j E_beta[A_j(.)] on a grid over the box (uniform fallback when
/// the field is identically zero).
inline MatrixX2d concentration_mass_sample(const SourceField& field, const WindPrior& wind_prior,
                                           const Bounds& bounds, const PlumeParams& params,
                                           const DesignConfig& cfg, RngStream& rng) {
    const auto winds = draw_wind_set(wind_prior, cfg.wind_samples, rng.next_u64());
    const int g = cfg.grid;
    const Vector2d span = bounds.hi - bounds.lo;
    const double dx = span.x() / g, dy = span.y() / g;
    std::vector<double> weight(static_cast<std::size_t>(g) * g, 0.0);
    std::vector<Vector2d> centers(weight.size());
    double total = 0.0;
    for (int iy = 0; iy < g; ++iy) {
        for (int ix = 0; ix < g; ++ix) {
            const Vector2d c{bounds.lo.x() + (ix + 0.5) * dx, bounds.lo.y() + (iy + 0.5) * dy};
            double v = 0.0;
            for (const auto& w : winds)
                for (int j = 0; j < field.size(); ++j)
                    v += field.prior.mean[j] * kernel(field.sources[j], c, w, params);
            const std::size_t cell = static_cast<std::size_t>(iy) * g + ix;
            centers[cell] = c;
            weight[cell] = v;
            total += v;
        }
    }
    MatrixX2d points(cfg.kmeans_points, 2);
    if (total <= 0.0) {
        for (int p = 0; p < cfg.kmeans_points; ++p) {
            points(p, 0) = rng.uniform(bounds.lo.x(), bounds.hi.x());
            points(p, 1) = rng.uniform(bounds.lo.y(), bounds.hi.y());
        }
        return points;
    }
    std::vector<double> cdf(weight.size());
    double acc = 0.0;
    for (std::size_t c = 0; c < weight.size(); ++c) {
        acc += weight[c] / total;
        cdf[c] = acc;
    }
    cdf.back() = 1.0;
    for (int p = 0; p < cfg.kmeans_points; ++p) {
        const double u = rng.uniform();
        const std::size_t cell =
            static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        points(p, 0) = centers[cell].x() + (rng.uniform() - 0.5) * dx;
        points(p, 1) = centers[cell].y() + (rng.uniform() - 0.5) * dy;
    }
    return points;
}

/// K-means design: centroids of a concentration-mass-weighted sample,
/// clipped to the box.
inline SensorLayout kmeans_design(const SourceField& field, const WindPrior& wind_prior,
                                  const Bounds& bounds, int n, const PlumeParams& params,
                                  const DesignConfig& cfg, std::uint64_t seed) {
    bounds.validate();
    RngStream rng(mix_seed(seed, 0x6b6d));
    const MatrixX2d points = concentration_mass_sample(field, wind_prior, bounds, params, cfg, rng);
    // k-means++ style seeding from the sample
    MatrixX2d init(n, 2);
    init.row(0) = points.row(static_cast<int>(rng.next_u64() % points.rows()));
    for (int c = 1; c < n; ++c) {
        std::vector<double> d2(static_cast<std::size_t>(points.rows()));
        double total = 0.0;
        for (int p = 0; p < points.rows(); ++p) {
            double best = (points.row(p) - init.row(0)).squaredNorm();
            for (int k = 1; k < c; ++k)
                best = std::min(best, (points.row(p) - init.row(k)).squaredNorm());
            d2[static_cast<std::size_t>(p)] = best;
            total += best;
        }
        double u = rng.uniform() * total;
        int chosen = 0;
        for (int p = 0; p < points.rows(); ++p) {
            u -= d2[static_cast<std::size_t>(p)];
            if (u <= 0.0) {
                chosen = p;
                break;
            }
        }
        init.row(c) = points.row(chosen);
    }
    MatrixX2d centroids = kmeans_lloyd(points, init, cfg.kmeans_iterations);
    SensorLayout layout{centroids, bounds};
    for (int i = 0; i < n; ++i) {
        layout.coords(i, 0) = std::clamp(layout.coords(i, 0), bounds.lo.x(), bounds.hi.x());
        layout.coords(i, 1) = std::clamp(layout.coords(i, 1), bounds.lo.y(), bounds.hi.y());
    }
    return layout;
}

}  // namespace plumeplace
