#pragma once

#include <cmath>

#include "plumeplace/rng.hpp"
#include "plumeplace/types.hpp"

namespace plumeplace {

namespace detail {

/// Downwind/crosswind decomposition of the sensor-source displacement.
struct PlumeFrame {
    double r_par;     // (s - x) . w, signed
    Vector2d perp;    // (s - x) - r_par * w (orthogonal to w)
    double r_perp_sq; // |perp|^2
};

inline PlumeFrame plume_frame(const Source& src, const Vector2d& sensor, const WindSample& wind) {
    const Vector2d delta = sensor - src.position;
    const double r_par = delta.dot(wind.direction);
    const Vector2d perp = delta - r_par * wind.direction;
    return {r_par, perp, perp.squaredNorm()};
}

inline double exponent_scale(const WindSample& wind, const PlumeParams& params) {
    const double u = params.use_wind_speed_factor ? wind.speed : 1.0;
    return u / (4.0 * params.eddy_diffusivity);
}

}  // namespace detail

inline constexpr double kTwoPi = 6.283185307179586476925287;

/// Gaussian plume kernel A_j(s_i): concentration per unit emission rate.
/// Exactly 0 when the sensor is at or upwind of the source plane
/// (downwind distance <= params.downwind_cutoff).
inline double kernel(const Source& src, const Vector2d& sensor, const WindSample& wind,
                     const PlumeParams& params) {
    const auto f = detail::plume_frame(src, sensor, wind);
    if (f.r_par <= params.downwind_cutoff) return 0.0;
    const double c = detail::exponent_scale(wind, params);
    const double e = -c * (f.r_perp_sq + src.height * src.height) / f.r_par;
    return std::exp(e) / (kTwoPi * params.eddy_diffusivity * f.r_par);
}

/// Analytic gradient of the kernel with respect to the sensor coordinates.
/// (0,0) inside the upwind zero region.
inline Vector2d kernel_grad(const Source& src, const Vector2d& sensor, const WindSample& wind,
                            const PlumeParams& params) {
    const auto f = detail::plume_frame(src, sensor, wind);
    if (f.r_par <= params.downwind_cutoff) return Vector2d::Zero();
    const double c = detail::exponent_scale(wind, params);
    const double hsq = src.height * src.height;
    const double e = -c * (f.r_perp_sq + hsq) / f.r_par;
    const double a = std::exp(e) / (kTwoPi * params.eddy_diffusivity * f.r_par);
    // dE/ds = -c * (2*perp*r_par - (r_perp^2 + H^2)*w) / r_par^2
    const Vector2d de =
        -c * (2.0 * f.perp * f.r_par - (f.r_perp_sq + hsq) * wind.direction) / (f.r_par * f.r_par);
    return a * (de - wind.direction / f.r_par);
}

/// Gradient of the product A_m * A_n with respect to the (shared) sensor
/// coordinates, in closed form. Agrees with the product rule
/// A_m * grad(A_n) + A_n * grad(A_m); computed through a single exponential
/// of the summed exponents.
inline Vector2d kernel_pair_grad(const Source& src_m, const Source& src_n, const Vector2d& sensor,
                                 const WindSample& wind, const PlumeParams& params) {
    const auto fm = detail::plume_frame(src_m, sensor, wind);
    const auto fn = detail::plume_frame(src_n, sensor, wind);
    if (fm.r_par <= params.downwind_cutoff || fn.r_par <= params.downwind_cutoff)
        return Vector2d::Zero();
    const double c = detail::exponent_scale(wind, params);
    const double hm = src_m.height * src_m.height;
    const double hn = src_n.height * src_n.height;
    const double em = -c * (fm.r_perp_sq + hm) / fm.r_par;
    const double en = -c * (fn.r_perp_sq + hn) / fn.r_par;
    const double k2 = kTwoPi * params.eddy_diffusivity;
    const double pair = std::exp(em + en) / (k2 * k2 * fm.r_par * fn.r_par);
    const Vector2d dem =
        -c * (2.0 * fm.perp * fm.r_par - (fm.r_perp_sq + hm) * wind.direction) /
        (fm.r_par * fm.r_par);
    const Vector2d den =
        -c * (2.0 * fn.perp * fn.r_par - (fn.r_perp_sq + hn) * wind.direction) /
        (fn.r_par * fn.r_par);
    return pair * (dem + den - wind.direction * (1.0 / fm.r_par + 1.0 / fn.r_par));
}

/// Forward matrix F(beta, s): F(i, j) = kernel of source j at sensor i.
/// Precondition: layout lies inside its bounds.
inline MatrixXd forward_matrix(const SourceField& field, const SensorLayout& layout,
                               const WindSample& wind, const PlumeParams& params) {
    const int n = layout.size();
    const int np = field.size();
    MatrixXd F(n, np);
    for (int i = 0; i < n; ++i) {
        const Vector2d s = layout.sensor(i);
        for (int j = 0; j < np; ++j) F(i, j) = kernel(field.sources[j], s, wind, params);
    }
    return F;
}

/// Noisy observation Phi = F*theta + eps, eps ~ N(0, sigma^2 I).
inline VectorXd observe(const MatrixXd& F, const VectorXd& theta, const NoiseModel& noise,
                        RngStream& rng) {
    if ((theta.array() < 0.0).any())
        throw NumericalError("observe: negative emission rate in scenario");
    VectorXd phi = F * theta;
    for (int i = 0; i < phi.size(); ++i) phi[i] += noise.sigma * rng.normal();
    return phi;
}

}  // namespace plumeplace
