#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lassotrack/errors.hpp"

namespace lassotrack {

// min over beta of (1/T)·‖y − X·beta‖² + lambda·‖beta‖₁
struct LassoProblem {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    double lambda;
    double tol;
    int max_iter;
    bool track_objective;

    LassoProblem(Eigen::MatrixXd X_, Eigen::VectorXd y_, double lambda_, double tol_ = 1e-6,
                 int max_iter_ = 100000, bool track_objective_ = false)
        : X(std::move(X_)), y(std::move(y_)), lambda(lambda_), tol(tol_), max_iter(max_iter_),
          track_objective(track_objective_) {
        if (X.rows() < 1 || X.cols() < 1)
            throw std::invalid_argument("LassoProblem: require T >= 1 and p >= 1");
        if (y.size() != X.rows())
            throw std::invalid_argument("LassoProblem: y length must match rows of X");
        if (!(lambda >= 0.0)) throw std::invalid_argument("LassoProblem: require lambda >= 0");
        if (!(tol > 0.0)) throw std::invalid_argument("LassoProblem: require tol > 0");
        if (max_iter < 1) throw std::invalid_argument("LassoProblem: require max_iter >= 1");
        for (Eigen::Index j = 0; j < X.cols(); ++j)
            if (X.col(j).squaredNorm() == 0.0)
                throw std::invalid_argument("LassoProblem: column " + std::to_string(j) +
                                            " of X is identically zero");
    }

    Eigen::Index rows() const { return X.rows(); }
    Eigen::Index cols() const { return X.cols(); }

    double objective(const Eigen::VectorXd& beta) const {
        return (y - X * beta).squaredNorm() / static_cast<double>(X.rows()) +
               lambda * beta.lpNorm<1>();
    }
};

struct LassoFit {
    Eigen::VectorXd beta;
    std::vector<int> active_set;         // indices j with |beta_j| above the zero threshold
    std::vector<int> signs;              // ±1, aligned with active_set
    int iterations = 0;                  // full cyclic sweeps used
    bool converged = false;
    double objective = 0.0;
    std::vector<double> objective_path;  // per-sweep objective when tracked
};

struct KktDiagnostics {
    double max_violation = 0.0;
    std::vector<double> violations;      // per coordinate
    std::vector<bool> flagged;           // violation > kkt_tol
    bool ok = true;
};

/// sign(z) · max(|z| − gamma, 0)
inline double soft_threshold(double z, double gamma) {
    if (!(gamma >= 0.0)) throw std::invalid_argument("soft_threshold: require gamma >= 0");
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

// Membership threshold for the active set; soft-thresholding produces exact
// zeros so anything above this is a genuine nonzero.
inline constexpr double kActiveSetZeroThreshold = 1e-10;

/// Smallest lambda at which the solution is identically zero: max_j |(2/T)·X_j'y|.
inline double critical_lambda(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    return (2.0 / static_cast<double>(X.rows())) * (X.transpose() * y).cwiseAbs().maxCoeff();
}

// Cyclic coordinate descent. Coordinate j sees the 1-d problem
//   (1/T)(c_j b² − 2 z_j b) + lambda|b|,  c_j = ‖X_j‖², z_j = X_j'r + c_j b_j,
// whose minimizer is soft_threshold(z_j, lambda·T/2)/c_j. Convergence is
// declared when the largest coordinate move in a full sweep drops below tol.
// Deterministic given inputs; warm-startable through beta0.
inline LassoFit fit_lasso(const LassoProblem& prob, const Eigen::VectorXd* beta0 = nullptr) {
    const Eigen::Index T = prob.rows();
    const Eigen::Index p = prob.cols();
    const double gamma = prob.lambda * static_cast<double>(T) / 2.0;

    if (!prob.X.allFinite() || !prob.y.allFinite())
        throw numeric_error("fit_lasso: non-finite values in the problem data (check input scaling)");

    LassoFit fit;
    fit.beta = (beta0 != nullptr) ? *beta0 : Eigen::VectorXd::Zero(p);
    if (beta0 != nullptr && beta0->size() != p)
        throw std::invalid_argument("fit_lasso: warm start has wrong length");

    Eigen::VectorXd colsq(p);
    for (Eigen::Index j = 0; j < p; ++j) colsq[j] = prob.X.col(j).squaredNorm();

    Eigen::VectorXd r = prob.y - prob.X * fit.beta;
    for (int sweep = 1; sweep <= prob.max_iter; ++sweep) {
        double max_delta = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            const double bj = fit.beta[j];
            const double zj = prob.X.col(j).dot(r) + colsq[j] * bj;
            const double bj_new = soft_threshold(zj, gamma) / colsq[j];
            if (bj_new != bj) {
                r += prob.X.col(j) * (bj - bj_new);
                fit.beta[j] = bj_new;
            }
            max_delta = std::max(max_delta, std::fabs(bj_new - bj));
        }
        fit.iterations = sweep;
        if (!std::isfinite(max_delta))
            throw numeric_error("fit_lasso: non-finite update encountered (check input scaling)");
        if (prob.track_objective) fit.objective_path.push_back(prob.objective(fit.beta));
        if (sweep % 256 == 0) r = prob.y - prob.X * fit.beta;  // refresh accumulated drift
        if (max_delta < prob.tol) {
            fit.converged = true;
            break;
        }
    }

    for (Eigen::Index j = 0; j < p; ++j) {
        if (std::fabs(fit.beta[j]) > kActiveSetZeroThreshold) {
            fit.active_set.push_back(static_cast<int>(j));
            fit.signs.push_back(fit.beta[j] > 0.0 ? 1 : -1);
        } else {
            fit.beta[j] = 0.0;
        }
    }
    fit.objective = prob.objective(fit.beta);
    return fit;
}

// Stationarity check: (2/T)·X_j'(y − X·beta) = lambda·s_j on the active set,
// |(2/T)·X_j'(y − X·beta)| ≤ lambda + kkt_tol off it.
inline KktDiagnostics check_kkt(const LassoFit& fit, const LassoProblem& prob,
                                double kkt_tol = 1e-5) {
    const Eigen::Index p = prob.cols();
    if (fit.beta.size() != p) throw std::invalid_argument("check_kkt: fit does not match problem");
    const Eigen::VectorXd grad =
        (2.0 / static_cast<double>(prob.rows())) * (prob.X.transpose() * (prob.y - prob.X * fit.beta));

    KktDiagnostics diag;
    diag.violations.assign(static_cast<std::size_t>(p), 0.0);
    diag.flagged.assign(static_cast<std::size_t>(p), false);
    std::vector<bool> active(static_cast<std::size_t>(p), false);
    std::vector<double> sign_of(static_cast<std::size_t>(p), 0.0);
    for (std::size_t k = 0; k < fit.active_set.size(); ++k) {
        active[static_cast<std::size_t>(fit.active_set[k])] = true;
        sign_of[static_cast<std::size_t>(fit.active_set[k])] = fit.signs[k];
    }
    for (Eigen::Index j = 0; j < p; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const double v = active[ju] ? std::fabs(grad[j] - prob.lambda * sign_of[ju])
                                    : std::max(0.0, std::fabs(grad[j]) - prob.lambda);
        diag.violations[ju] = v;
        diag.flagged[ju] = v > kkt_tol;
        diag.max_violation = std::max(diag.max_violation, v);
    }
    diag.ok = diag.max_violation <= kkt_tol;
    return diag;
}

} // namespace lassotrack
