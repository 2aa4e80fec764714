#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "plumeplace/errors.hpp"

namespace plumeplace {

using Eigen::MatrixXd;
using Eigen::Vector2d;
using Eigen::VectorXd;
using MatrixX2d = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// One emission source: planar position and stack height.
struct Source {
    Vector2d position{0.0, 0.0};
    double height = 0.0;  // H_j >= 0
};

/// Wind realization: unit direction the wind blows toward, and speed u > 0.
/// "North wind" (from the north) has direction (0, -1).
struct WindSample {
    Vector2d direction{0.0, -1.0};
    double speed = 1.0;

    static WindSample from_angle(double phi, double speed) {
        return WindSample{{std::cos(phi), std::sin(phi)}, speed};
    }
    /// Wind vector beta = u * w.
    Vector2d beta() const { return speed * direction; }
};

/// Isotropic observation noise, covariance sigma^2 * I.
struct NoiseModel {
    double sigma = 1.0;
};

/// Gaussian plume kernel parameters.
struct PlumeParams {
    double eddy_diffusivity = 1.0;  // K > 0
    /// If true (default) the exponent carries the wind-speed factor u; the
    /// alternative form drops it. Analytic gradients cover both.
    bool use_wind_speed_factor = true;
    /// Kernel and gradients are exactly 0 for downwind distance <= this.
    double downwind_cutoff = 1e-9;
};

enum class EmissionMode { TruncatedNormal, SparseLeak };

/// Prior over emission rates: componentwise nonnegative truncated normal,
/// optionally masked by independent Bernoulli leak indicators.
struct EmissionPrior {
    EmissionMode mode = EmissionMode::TruncatedNormal;
    VectorXd mean;    // mu_pr, elementwise >= 0
    VectorXd stddev;  // sqrt(diag(Gamma_pr)), elementwise > 0
    double leak_probability = 1.0;  // sparse-leak mode only
};

/// Fixed source geometry plus the emission-rate prior.
struct SourceField {
    std::vector<Source> sources;
    EmissionPrior prior;

    int size() const { return static_cast<int>(sources.size()); }
};

/// Uniform prior over wind speed and direction angle (radians, toward-convention).
struct WindPrior {
    double speed_min = 1.0;
    double speed_max = 1.0;
    double angle_min = -1.5707963267948966;
    double angle_max = -1.5707963267948966;
};

/// Axis-aligned admissible box for sensor coordinates.
struct Bounds {
    Vector2d lo{0.0, 0.0};
    Vector2d hi{0.0, 0.0};

    void validate() const {
        if (!(lo.x() <= hi.x()) || !(lo.y() <= hi.y()))
            throw ConfigError("sensor bounds: lower bound exceeds upper bound");
    }
    double diagonal() const { return (hi - lo).norm(); }
    bool contains(const Vector2d& p, double tol = 0.0) const {
        return p.x() >= lo.x() - tol && p.x() <= hi.x() + tol && p.y() >= lo.y() - tol &&
               p.y() <= hi.y() + tol;
    }
};

/// n sensor coordinates with their admissible box.
struct SensorLayout {
    MatrixX2d coords;  // row i = sensor i
    Bounds bounds;

    int size() const { return static_cast<int>(coords.rows()); }
    Vector2d sensor(int i) const { return coords.row(i).transpose(); }
    bool feasible(double tol = 1e-12) const {
        for (int i = 0; i < size(); ++i)
            if (!bounds.contains(sensor(i), tol)) return false;
        return true;
    }
};

}  // namespace plumeplace
