#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "lassotrack/data.hpp"
#include "lassotrack/errors.hpp"

namespace lassotrack {

struct TrackingResult {
    Eigen::VectorXd tracked;  // X·w, aligned with the benchmark series
    double ete = 0.0;
    double corr = 0.0;
};

/// Empirical tracking error (1/T)·‖X·w − r_b‖².
inline double ete(const Eigen::MatrixXd& X, const Eigen::VectorXd& w, const Eigen::VectorXd& r_b) {
    if (w.size() != X.cols() || r_b.size() != X.rows())
        throw std::invalid_argument("ete: dimension mismatch");
    if (X.rows() < 1) throw std::invalid_argument("ete: require T >= 1");
    return (X * w - r_b).squaredNorm() / static_cast<double>(X.rows());
}

inline double pearson_corr(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("pearson_corr: need equal lengths >= 2");
    const Eigen::VectorXd da = a.array() - a.mean();
    const Eigen::VectorXd db = b.array() - b.mean();
    const double na = da.norm();
    const double nb = db.norm();
    if (na == 0.0 || nb == 0.0)
        throw numeric_error("pearson_corr: correlation undefined for a constant series");
    return da.dot(db) / (na * nb);
}

/// Tracked series X·beta with its ETE and correlation against the benchmark.
inline TrackingResult evaluate_tracking(const ReturnsPanel& panel, const Eigen::VectorXd& beta) {
    if (beta.size() != panel.p()) throw std::invalid_argument("evaluate_tracking: beta length != p");
    if (panel.r_b.size() != panel.T())
        throw std::invalid_argument("evaluate_tracking: panel has no benchmark series");
    TrackingResult result;
    result.tracked = panel.X * beta;
    result.ete = ete(panel.X, beta, panel.r_b);
    result.corr = pearson_corr(result.tracked, panel.r_b);
    return result;
}

} // namespace lassotrack
