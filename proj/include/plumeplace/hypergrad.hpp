#pragma once

#include <Eigen/Cholesky>
#include <vector>

#include "plumeplace/inverse.hpp"
#include "plumeplace/parallel.hpp"
#include "plumeplace/plume.hpp"
#include "plumeplace/scenario.hpp"

namespace plumeplace {

/// Derivatives of the lower-level QP data (C, d) with respect to the 2n
/// sensor coordinates, for one scenario. Coordinate (i, a) only touches row i
/// of F, so the full dC matrices are rank-2 symmetric outer products; only
/// the per-sensor kernel gradients are stored and products are formed on
/// demand. Coordinates are indexed c = 2*i + a (sensor i, axis a).
///
/// `differentiate_observations` selects the data semantics of grad d. The
/// observation a sensor would record moves with the sensor
/// (Phi_i = F_i. theta + eps_i with eps fixed); including that dependence
/// makes the Jacobian the pathwise derivative of the sampled objective, and
/// its gradient field vanishes at that objective's optima. With Phi held
/// fixed instead, the missing -sigma^-2 F'(dF) theta term shifts the
/// stationary points away from the IMSE optima.
struct QpSensitivities {
    MatrixXd F;            // n x Np forward matrix at the layout
    VectorXd phi;          // observation at the layout
    VectorXd theta_truth;  // rates that generated phi (for dPhi/ds)
    double inv_var = 1.0;
    bool differentiate_observations = true;
    std::vector<Eigen::Matrix<double, 2, Eigen::Dynamic>> dF;  // [i](a, j) = dF(i,j)/ds_{i,a}

    int n_sensors() const { return static_cast<int>(F.rows()); }
    int n_sources() const { return static_cast<int>(F.cols()); }

    /// dC/ds_{i,a} materialized (Np x Np, symmetric).
    MatrixXd dC(int i, int a) const {
        const VectorXd f = F.row(i).transpose();
        const VectorXd g = dF[i].row(a).transpose();
        return inv_var * (g * f.transpose() + f * g.transpose());
    }

    /// dd/ds_{i,a} = -sigma^-2 (dF_i' Phi_i [+ F_i' dPhi_i]).
    VectorXd dd(int i, int a) const {
        const VectorXd g = dF[i].row(a).transpose();
        VectorXd out = (-inv_var * phi[i]) * g;
        if (differentiate_observations)
            out -= (inv_var * g.dot(theta_truth)) * F.row(i).transpose();
        return out;
    }

    /// (dC/ds_{i,a}) * theta without materializing the matrix.
    VectorXd dC_times(int i, int a, const VectorXd& theta) const {
        const VectorXd f = F.row(i).transpose();
        const VectorXd g = dF[i].row(a).transpose();
        return inv_var * (g * f.dot(theta) + f * g.dot(theta));
    }

    /// Np x 2n matrix with column 2i+a = dC/ds_{i,a} * theta + dd/ds_{i,a}.
    MatrixXd kkt_rhs(const VectorXd& theta) const {
        MatrixXd rhs(n_sources(), 2 * n_sensors());
        for (int i = 0; i < n_sensors(); ++i) {
            const VectorXd f = F.row(i).transpose();
            const double ft = f.dot(theta);
            for (int a = 0; a < 2; ++a) {
                const VectorXd g = dF[i].row(a).transpose();
                rhs.col(2 * i + a) = inv_var * (g * ft + f * g.dot(theta) - phi[i] * g);
                if (differentiate_observations)
                    rhs.col(2 * i + a) -= (inv_var * g.dot(theta_truth)) * f;
            }
        }
        return rhs;
    }
};

inline QpSensitivities qp_sensitivities(const SourceField& field, const SensorLayout& layout,
                                        const Scenario& scenario, const NoiseModel& noise,
                                        const PlumeParams& params,
                                        bool differentiate_observations = true) {
    QpSensitivities sens;
    sens.F = scenario.forward;
    sens.phi = scenario.observation;
    sens.theta_truth = scenario.theta_true;
    sens.inv_var = 1.0 / (noise.sigma * noise.sigma);
    sens.differentiate_observations = differentiate_observations;
    const int n = layout.size();
    const int np = field.size();
    sens.dF.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        sens.dF[i].resize(2, np);
        const Vector2d s = layout.sensor(i);
        for (int j = 0; j < np; ++j) {
            const Vector2d grad = kernel_grad(field.sources[j], s, scenario.wind, params);
            sens.dF[i](0, j) = grad.x();
            sens.dF[i](1, j) = grad.y();
        }
    }
    return sens;
}

/// Jacobian d theta_hat / d s (Np x 2n) by implicit differentiation of the
/// lower-level KKT system at the given solution:
///   d eta_bar = (I_A C^-1 I_A')^-1 I_A C^-1 (dC theta + dd)
///   d theta   = C^-1 (-dC theta - dd + I_A' d eta_bar)
/// Rows in the active set come out exactly zero. The empty active set reduces
/// to the unconstrained implicit function theorem.
inline MatrixXd theta_jacobian(const QpProblem& qp, const QpSensitivities& sens,
                               const InverseSolution& sol) {
    const int np = qp.dim();
    const MatrixXd rhs = sens.kkt_rhs(sol.theta);
    Eigen::LLT<MatrixXd> llt(qp.C);
    if (llt.info() != Eigen::Success)
        throw NumericalError("theta_jacobian: C is not positive definite (lambda1 = 0?)");
    const MatrixXd y = llt.solve(rhs);  // C^-1 (dC theta + dd)
    if (sol.active_set.empty()) return -y;

    const int na = static_cast<int>(sol.active_set.size());
    MatrixXd ebar = MatrixXd::Zero(np, na);  // columns of I_A'
    for (int k = 0; k < na; ++k) ebar(sol.active_set[k], k) = 1.0;
    const MatrixXd x = llt.solve(ebar);  // C^-1 I_A'
    MatrixXd s_small(na, na);            // I_A C^-1 I_A'
    MatrixXd y_active(na, y.cols());
    for (int k = 0; k < na; ++k) {
        s_small.row(k) = x.row(sol.active_set[k]);
        y_active.row(k) = y.row(sol.active_set[k]);
    }
    Eigen::LDLT<MatrixXd> small(s_small);
    if (small.info() != Eigen::Success)
        throw NumericalError("theta_jacobian: singular active-set system");
    const MatrixXd deta = small.solve(y_active);
    return -y + x * deta;
}

/// Sampled IMSE hypergradient and its per-scenario contributions.
struct Hypergradient {
    VectorXd g;             // 2n entries, coordinate order 2*i + a
    MatrixXd per_scenario;  // 2n x N contributions; g is their fixed-order mean
    bool strict_complementarity_ok = true;

    int scenario_count() const { return static_cast<int>(per_scenario.cols()); }
};

/// g = (2/N) sum_i J_i' (theta_hat_i - theta_i). The reduction runs over
/// stored per-scenario columns in fixed order, so results do not depend on
/// the thread count.
inline Hypergradient imse_hypergradient(const std::vector<Scenario>& scenarios,
                                        const std::vector<InverseSolution>& solutions,
                                        const std::vector<MatrixXd>& jacobians) {
    const int count = static_cast<int>(scenarios.size());
    const int dim = count > 0 ? static_cast<int>(jacobians[0].cols()) : 0;
    Hypergradient hg;
    hg.per_scenario.resize(dim, count);
    for (int i = 0; i < count; ++i) {
        const VectorXd residual = solutions[i].theta - scenarios[i].theta_true;
        hg.per_scenario.col(i) = 2.0 * (jacobians[i].transpose() * residual);
        if (!solutions[i].strict_complementarity) hg.strict_complementarity_ok = false;
    }
    hg.g = VectorXd::Zero(dim);
    if (count == 0) return hg;
    std::vector<double> slot(static_cast<std::size_t>(count));
    for (int c = 0; c < dim; ++c) {
        for (int i = 0; i < count; ++i) slot[static_cast<std::size_t>(i)] = hg.per_scenario(c, i);
        hg.g[c] = pairwise_sum(slot) / count;
    }
    if (!hg.g.allFinite()) throw NumericalError("imse_hypergradient: non-finite hypergradient");
    return hg;
}

}  // namespace plumeplace
