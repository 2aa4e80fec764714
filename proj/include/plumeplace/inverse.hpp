#pragma once

#include <Eigen/Cholesky>
#include <Eigen/QR>
#include <algorithm>
#include <iostream>
#include <limits>
#include <vector>

#include "plumeplace/types.hpp"

namespace plumeplace {

/// Lower-level QP: minimize 0.5*theta'C theta + d'theta subject to theta >= 0,
/// with C = sigma^-2 F'F + lambda1 I and d = lambda2 1 - sigma^-2 F'Phi.
struct QpProblem {
    MatrixXd C;
    VectorXd d;
    // provenance
    double sigma = 1.0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;

    int dim() const { return static_cast<int>(d.size()); }
    double objective(const VectorXd& theta) const {
        return 0.5 * theta.dot(C * theta) + d.dot(theta);
    }
};

inline QpProblem build_qp(const MatrixXd& F, const VectorXd& phi, const NoiseModel& noise,
                          double lambda1, double lambda2) {
    const double inv_var = 1.0 / (noise.sigma * noise.sigma);
    QpProblem qp;
    qp.C = inv_var * (F.transpose() * F);
    qp.C = 0.5 * (qp.C + qp.C.transpose().eval());
    qp.C.diagonal().array() += lambda1;
    qp.d = VectorXd::Constant(F.cols(), lambda2) - inv_var * (F.transpose() * phi);
    qp.sigma = noise.sigma;
    qp.lambda1 = lambda1;
    qp.lambda2 = lambda2;
    if (lambda1 == 0.0) {
        Eigen::ColPivHouseholderQR<MatrixXd> qr(F);
        if (qr.rank() < F.cols())
            std::cerr << "warning: lambda1 = 0 with rank-deficient forward matrix; "
                         "the lower-level QP is singular\n";
    }
    return qp;
}

/// Solution of the lower-level QP with its KKT diagnostics.
struct InverseSolution {
    VectorXd theta;
    VectorXd eta;
    std::vector<int> active_set;  // indices with theta_b == 0 (within tolerance)
    double kkt_residual = 0.0;
    int iterations = 0;
    /// False when some index has both theta_b and the multiplier estimate
    /// (C theta + d)_b near zero; the hypergradient then treats it as active.
    bool strict_complementarity = true;
};

/// max( ||C th + d - eta||_inf, ||min(th, C th + d)||_inf, max_b |eta_b th_b| )
inline double kkt_residual(const QpProblem& qp, const VectorXd& theta, const VectorXd& eta) {
    const VectorXd g = qp.C * theta + qp.d;
    const double stat = (g - eta).lpNorm<Eigen::Infinity>();
    const double ncp = theta.cwiseMin(g).lpNorm<Eigen::Infinity>();
    const double comp = (eta.array() * theta.array()).abs().maxCoeff();
    return std::max({stat, ncp, comp});
}

namespace detail {

inline std::vector<int> active_indices(const VectorXd& theta) {
    const double tol = 1e-7 * std::max(1.0, theta.lpNorm<Eigen::Infinity>());
    std::vector<int> active;
    for (int b = 0; b < theta.size(); ++b)
        if (theta[b] <= tol) active.push_back(b);
    return active;
}

// The dual iterate of the projected primal-dual method freezes once a
// component of theta is projected to exactly 0, so the active set and the
// strict-complementarity flag are derived from theta and the multiplier
// estimate C theta + d rather than from the eta iterate.
inline InverseSolution finalize(const QpProblem& qp, VectorXd theta, VectorXd eta,
                                int iterations) {
    InverseSolution sol;
    sol.theta = std::move(theta);
    sol.eta = std::move(eta);
    sol.iterations = iterations;
    sol.kkt_residual = kkt_residual(qp, sol.theta, sol.eta);
    sol.active_set = active_indices(sol.theta);
    const VectorXd mult = qp.C * sol.theta + qp.d;
    const double tol_t = 1e-7 * std::max(1.0, sol.theta.lpNorm<Eigen::Infinity>());
    const double tol_m = 1e-7 * std::max(1.0, mult.lpNorm<Eigen::Infinity>());
    sol.strict_complementarity = true;
    for (int b = 0; b < sol.theta.size(); ++b)
        if (sol.theta[b] <= tol_t && mult[b] <= tol_m) sol.strict_complementarity = false;
    return sol;
}

}  // namespace detail

/// Augmented primal-dual solver settings.
struct PdSolverConfig {
    double penalty = 0.0;  // gamma; <= 0 selects 10*lambda1 + 1
    double step = 5e-4;    // tau
    bool step_decay = false;  // tau_j = step / sqrt(j+1)
    int max_iterations = 1;   // J
    double kkt_tol = 0.0;     // 0 = run all J iterations
};

inline double resolve_penalty(const PdSolverConfig& cfg, const QpProblem& qp) {
    return cfg.penalty > 0.0 ? cfg.penalty : 10.0 * qp.lambda1 + 1.0;
}

/// Value of the augmented Lagrangian h_gamma(theta, eta).
inline double aug_lagrangian(const QpProblem& qp, const VectorXd& theta, const VectorXd& eta,
                             double gamma) {
    double hinge = 0.0;
    for (int b = 0; b < theta.size(); ++b) {
        const double h = std::max(gamma * (-theta[b]) + eta[b], 0.0);
        hinge += (h * h - eta[b] * eta[b]) / (2.0 * gamma);
    }
    return qp.objective(theta) + hinge;
}

/// Gradients of h_gamma with respect to theta and eta.
inline void aug_lagrangian_grads(const QpProblem& qp, const VectorXd& theta, const VectorXd& eta,
                                 double gamma, VectorXd& grad_theta, VectorXd& grad_eta) {
    grad_theta = qp.C * theta + qp.d;
    grad_eta.resize(theta.size());
    for (int b = 0; b < theta.size(); ++b) {
        const double h = std::max(gamma * (-theta[b]) + eta[b], 0.0);
        grad_theta[b] -= h;
        grad_eta[b] = (h - eta[b]) / gamma;
    }
}

/// Projected augmented primal-dual gradient iterations:
///   theta <- [theta - tau * grad_theta h_gamma]_+
///   eta   <- [eta   + tau * grad_eta   h_gamma]_+
/// Runs the configured number of iterations (or stops early at the KKT
/// tolerance when one is set) and returns the last iterate either way.
inline InverseSolution solve_pd(const QpProblem& qp, VectorXd theta0, VectorXd eta0,
                                const PdSolverConfig& cfg) {
    const double gamma = resolve_penalty(cfg, qp);
    VectorXd theta = theta0.cwiseMax(0.0);
    VectorXd eta = eta0.cwiseMax(0.0);
    VectorXd gt, ge;
    int j = 0;
    for (; j < cfg.max_iterations; ++j) {
        if (cfg.kkt_tol > 0.0 && kkt_residual(qp, theta, eta) <= cfg.kkt_tol) break;
        const double tau = cfg.step_decay ? cfg.step / std::sqrt(j + 1.0) : cfg.step;
        aug_lagrangian_grads(qp, theta, eta, gamma, gt, ge);
        theta = (theta - tau * gt).cwiseMax(0.0);
        eta = (eta + tau * ge).cwiseMax(0.0);
        if (!theta.allFinite() || theta.lpNorm<Eigen::Infinity>() > 1e12)
            throw NumericalError("solve_pd: iterates diverging; reduce the inner step tau");
    }
    return detail::finalize(qp, std::move(theta), std::move(eta), j);
}

/// solve_pd with the default initialization theta = 0, eta = [d]_+.
inline InverseSolution solve_pd(const QpProblem& qp, const PdSolverConfig& cfg) {
    return solve_pd(qp, VectorXd::Zero(qp.dim()), qp.d.cwiseMax(0.0), cfg);
}

/// Exact solve by enumerating candidate active sets (unique KKT point for
/// positive definite C). Exponential in dim; intended for small problems
/// and as a verification oracle.
inline InverseSolution solve_enumerate(const QpProblem& qp) {
    const int np = qp.dim();
    if (np > 20) throw ConfigError("solve_enumerate: dimension > 20");
    const double scale = std::max({1.0, qp.d.lpNorm<Eigen::Infinity>(),
                                   qp.C.lpNorm<Eigen::Infinity>()});
    const double tol = 1e-11 * scale;
    double best_obj = std::numeric_limits<double>::infinity();
    VectorXd best_theta;
    bool found = false;
    for (std::uint32_t mask = 0; mask < (1u << np); ++mask) {
        std::vector<int> free_idx;
        for (int b = 0; b < np; ++b)
            if (!(mask & (1u << b))) free_idx.push_back(b);
        VectorXd theta = VectorXd::Zero(np);
        if (!free_idx.empty()) {
            const int nf = static_cast<int>(free_idx.size());
            MatrixXd cff(nf, nf);
            VectorXd df(nf);
            for (int r = 0; r < nf; ++r) {
                df[r] = qp.d[free_idx[r]];
                for (int c = 0; c < nf; ++c) cff(r, c) = qp.C(free_idx[r], free_idx[c]);
            }
            Eigen::LDLT<MatrixXd> ldlt(cff);
            if (ldlt.info() != Eigen::Success || !ldlt.isPositive())
                throw NumericalError("solve_enumerate: singular free-set block");
            const VectorXd tf = ldlt.solve(-df);
            bool feasible = true;
            for (int r = 0; r < nf; ++r) {
                if (tf[r] < -tol) { feasible = false; break; }
                theta[free_idx[r]] = std::max(tf[r], 0.0);
            }
            if (!feasible) continue;
        }
        const VectorXd g = qp.C * theta + qp.d;
        bool dual_ok = true;
        for (int b = 0; b < np && dual_ok; ++b)
            if ((mask & (1u << b)) && g[b] < -tol) dual_ok = false;
        if (!dual_ok) continue;
        const double obj = qp.objective(theta);
        if (!found || obj < best_obj) {
            found = true;
            best_obj = obj;
            best_theta = theta;
        }
    }
    if (!found) throw NumericalError("solve_enumerate: no KKT point found");
    const VectorXd eta = (qp.C * best_theta + qp.d).cwiseMax(0.0);
    return detail::finalize(qp, best_theta, eta, 1 << np);
}

/// Primal active-set method for the nonnegativity-constrained QP; exact
/// (finite termination) for positive definite C.
inline InverseSolution solve_active_set(const QpProblem& qp) {
    const int np = qp.dim();
    const double scale = std::max({1.0, qp.d.lpNorm<Eigen::Infinity>(),
                                   qp.C.lpNorm<Eigen::Infinity>()});
    const double tol = 1e-12 * scale;
    VectorXd theta = VectorXd::Zero(np);
    std::vector<bool> free_mask(np, false);
    int iters = 0;
    const int max_outer = 3 * np + 10;

    auto solve_free = [&](VectorXd& z) -> bool {
        std::vector<int> free_idx;
        for (int b = 0; b < np; ++b)
            if (free_mask[b]) free_idx.push_back(b);
        z = VectorXd::Zero(np);
        if (free_idx.empty()) return true;
        const int nf = static_cast<int>(free_idx.size());
        MatrixXd cff(nf, nf);
        VectorXd df(nf);
        for (int r = 0; r < nf; ++r) {
            df[r] = qp.d[free_idx[r]];
            for (int c = 0; c < nf; ++c) cff(r, c) = qp.C(free_idx[r], free_idx[c]);
        }
        Eigen::LDLT<MatrixXd> ldlt(cff);
        if (ldlt.info() != Eigen::Success) return false;
        const VectorXd zf = ldlt.solve(-df);
        for (int r = 0; r < nf; ++r) z[free_idx[r]] = zf[r];
        return true;
    };

    for (int outer = 0; outer < max_outer; ++outer) {
        // most negative multiplier among active constraints enters the free set
        const VectorXd g = qp.C * theta + qp.d;
        int enter = -1;
        double worst = -tol;
        for (int b = 0; b < np; ++b)
            if (!free_mask[b] && g[b] < worst) { worst = g[b]; enter = b; }
        if (enter < 0) break;
        free_mask[enter] = true;
        for (int inner = 0; inner < np + 1; ++inner) {
            ++iters;
            VectorXd z;
            if (!solve_free(z))
                throw NumericalError("solve_active_set: singular free-set block");
            bool interior = true;
            for (int b = 0; b < np; ++b)
                if (free_mask[b] && z[b] < -tol) { interior = false; break; }
            if (interior) {
                theta = z.cwiseMax(0.0);
                break;
            }
            // step toward z until the first free component hits zero
            double alpha = 1.0;
            int blocking = -1;
            for (int b = 0; b < np; ++b) {
                if (!free_mask[b] || z[b] >= -tol) continue;
                const double a = theta[b] / (theta[b] - z[b]);
                if (a < alpha) { alpha = a; blocking = b; }
            }
            theta = (theta + alpha * (z - theta)).cwiseMax(0.0);
            if (blocking >= 0) {
                free_mask[blocking] = false;
                theta[blocking] = 0.0;
            }
        }
    }
    const VectorXd eta = (qp.C * theta + qp.d).cwiseMax(0.0);
    return detail::finalize(qp, std::move(theta), eta, iters);
}

/// Exact KKT point of the lower-level QP. Enumeration for small problems,
/// primal active-set above that.
inline InverseSolution solve_exact(const QpProblem& qp) {
    return qp.dim() <= 8 ? solve_enumerate(qp) : solve_active_set(qp);
}

}  // namespace plumeplace
