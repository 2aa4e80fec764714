#pragma once

#include <vector>

#include "plumeplace/parallel.hpp"
#include "plumeplace/plume.hpp"
#include "plumeplace/rng.hpp"
#include "plumeplace/types.hpp"

namespace plumeplace {

/// One Monte Carlo draw of (wind, true rates, forward matrix, observation).
struct Scenario {
    WindSample wind;
    VectorXd theta_true;
    MatrixXd forward;
    VectorXd observation;

    /// The noise realization; exact since observation = F*theta + eps.
    VectorXd noise_draw() const { return observation - forward * theta_true; }
};

inline WindSample sample_wind(const WindPrior& prior, RngStream& rng) {
    const double phi = rng.uniform(prior.angle_min, prior.angle_max);
    const double u = rng.uniform(prior.speed_min, prior.speed_max);
    return WindSample::from_angle(phi, u);
}

/// Draw emission rates from the prior; elementwise >= 0.
inline VectorXd sample_emissions(const EmissionPrior& prior, RngStream& rng) {
    const int np = static_cast<int>(prior.mean.size());
    VectorXd theta(np);
    for (int j = 0; j < np; ++j)
        theta[j] = rng.truncated_normal(prior.mean[j], prior.stddev[j]);
    if (prior.mode == EmissionMode::SparseLeak) {
        for (int j = 0; j < np; ++j)
            if (rng.uniform() >= prior.leak_probability) theta[j] = 0.0;
    }
    return theta;
}

/// Sample one scenario at the given layout from substream `index` of `seed`.
inline Scenario sample_scenario(const SourceField& field, const SensorLayout& layout,
                                const WindPrior& wind_prior, const NoiseModel& noise,
                                const PlumeParams& params, std::uint64_t seed,
                                std::uint64_t index) {
    RngStream rng(mix_seed(seed, index));
    Scenario sc;
    sc.wind = sample_wind(wind_prior, rng);
    sc.theta_true = sample_emissions(field.prior, rng);
    sc.forward = forward_matrix(field, layout, sc.wind, params);
    sc.observation = observe(sc.forward, sc.theta_true, noise, rng);
    return sc;
}

/// Batch of independent scenarios; per-scenario substreams make parallel
/// generation identical to sequential generation.
inline std::vector<Scenario> sample_batch(int count, const SourceField& field,
                                          const SensorLayout& layout, const WindPrior& wind_prior,
                                          const NoiseModel& noise, const PlumeParams& params,
                                          std::uint64_t seed) {
    std::vector<Scenario> batch(static_cast<std::size_t>(count));
    parallel_for(batch.size(), [&](std::size_t i) {
        batch[i] = sample_scenario(field, layout, wind_prior, noise, params, seed, i);
    });
    return batch;
}

}  // namespace plumeplace
