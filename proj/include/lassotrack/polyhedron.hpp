#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "lassotrack/errors.hpp"
#include "lassotrack/truncation_interval.hpp"

namespace lassotrack {

struct PolyhedronProvenance {
    std::vector<int> active_set;
    std::vector<int> signs;
    double lambda = 0.0;
    std::string design_id;
};

// Selection event {y : A·y ≤ b} of a Lasso fit with fixed active set and
// sign pattern. Rows are ordered: |M| active-sign rows, then the +/- blocks
// for the p − |M| inactive coordinates.
struct SelectionPolyhedron {
    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    PolyhedronProvenance provenance;
};

namespace detail {

inline std::string design_fingerprint(const Eigen::MatrixXd& X) {
    std::uint64_t h = 1469598103934665603ULL;
    const auto* data = reinterpret_cast<const unsigned char*>(X.data());
    const std::size_t n = static_cast<std::size_t>(X.size()) * sizeof(double);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ULL;
    }
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%ldx%ld-%016llx", static_cast<long>(X.rows()),
                  static_cast<long>(X.cols()), static_cast<unsigned long long>(h));
    return buf;
}

} // namespace detail

// Builds {Ay ≤ b} for the event "Lasso on (X, ·) at this lambda selects
// exactly M with signs s". With lambda' = T·lambda/2 (the penalty weight once
// the (1/T)‖·‖² loss is rescaled to ½‖·‖²), G = X_M'X_M and X+ = G⁻¹X_M':
//   active rows:    −diag(s)·X+ · y ≤ −lambda'·diag(s)·G⁻¹s
//   inactive rows:  ±(1/lambda')·X_{−M}'(I − P_M) · y ≤ 1 ∓ X_{−M}'X_M·G⁻¹s
inline SelectionPolyhedron build_polyhedron(const Eigen::MatrixXd& X, double lambda,
                                            const std::vector<int>& active_set,
                                            const std::vector<int>& signs) {
    const Eigen::Index T = X.rows();
    const Eigen::Index p = X.cols();
    const auto k = static_cast<Eigen::Index>(active_set.size());
    if (k < 1) throw std::invalid_argument("build_polyhedron: active set must be non-empty");
    if (signs.size() != active_set.size())
        throw std::invalid_argument("build_polyhedron: active set and signs differ in length");
    if (!(lambda > 0.0)) throw std::invalid_argument("build_polyhedron: require lambda > 0");

    Eigen::MatrixXd Xm(T, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        const int j = active_set[static_cast<std::size_t>(i)];
        if (j < 0 || j >= p) throw std::invalid_argument("build_polyhedron: active index out of range");
        Xm.col(i) = X.col(j);
    }
    Eigen::VectorXd s(k);
    for (Eigen::Index i = 0; i < k; ++i) s[i] = signs[static_cast<std::size_t>(i)];

    const Eigen::MatrixXd G = Xm.transpose() * Xm;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    const double ev_min = es.eigenvalues().minCoeff();
    const double ev_max = es.eigenvalues().maxCoeff();
    if (!(ev_min > 1e-12 * std::max(ev_max, 1.0)))
        throw numeric_error("build_polyhedron: X_M'X_M numerically singular (eigenvalue ratio " +
                            std::to_string(ev_min / std::max(ev_max, 1e-300)) +
                            "); selected columns are collinear");
    const Eigen::LLT<Eigen::MatrixXd> llt(G);

    const double lambda_half = static_cast<double>(T) * lambda / 2.0;
    const Eigen::MatrixXd Xplus = llt.solve(Xm.transpose());  // k × T
    const Eigen::VectorXd Ginv_s = llt.solve(s);

    const Eigen::Index n_inactive = p - k;
    SelectionPolyhedron poly;
    poly.A.resize(k + 2 * n_inactive, T);
    poly.b.resize(k + 2 * n_inactive);

    poly.A.topRows(k) = -(s.asDiagonal() * Xplus);
    poly.b.head(k) = -lambda_half * (s.asDiagonal() * Ginv_s);

    if (n_inactive > 0) {
        Eigen::MatrixXd Xout(T, n_inactive);
        std::vector<bool> is_active(static_cast<std::size_t>(p), false);
        for (int j : active_set) is_active[static_cast<std::size_t>(j)] = true;
        Eigen::Index c = 0;
        for (Eigen::Index j = 0; j < p; ++j)
            if (!is_active[static_cast<std::size_t>(j)]) Xout.col(c++) = X.col(j);

        // X_{−M}'(I − P_M) = X_{−M}' − (X_{−M}'X_M)·X+
        const Eigen::MatrixXd cross = Xout.transpose() * Xm;        // n_inactive × k
        const Eigen::MatrixXd W = Xout.transpose() - cross * Xplus; // n_inactive × T
        const Eigen::VectorXd v = cross * Ginv_s;

        poly.A.middleRows(k, n_inactive) = W / lambda_half;
        poly.b.segment(k, n_inactive) = Eigen::VectorXd::Ones(n_inactive) - v;
        poly.A.bottomRows(n_inactive) = -W / lambda_half;
        poly.b.tail(n_inactive) = Eigen::VectorXd::Ones(n_inactive) + v;
    }

    poly.provenance.active_set = active_set;
    poly.provenance.signs = signs;
    poly.provenance.lambda = lambda;
    poly.provenance.design_id = detail::design_fingerprint(X);
    return poly;
}

/// max_j((Ay)_j − b_j); non-positive means y satisfies every constraint.
inline double verify_membership(const SelectionPolyhedron& poly, const Eigen::VectorXd& y) {
    if (y.size() != poly.A.cols())
        throw std::invalid_argument("verify_membership: response length " + std::to_string(y.size()) +
                                    " does not match polyhedron width " + std::to_string(poly.A.cols()));
    return (poly.A * y - poly.b).maxCoeff();
}

// Truncation bounds of the statistic η'y conditional on {Ay ≤ b}, for noise
// covariance Σ = sigma2·I:
//   alpha  = A·Σ·η / (η'Ση)
//   nu⁻   = max over alpha_j < 0 of (b_j − (Ay)_j + alpha_j·η'y)/alpha_j
//   nu⁺   = min over alpha_j > 0 of the same expression
//   nu⁰   = min over alpha_j = 0 of (b_j − (Ay)_j)
// Empty index sets give −inf / +inf / +inf; |alpha_j| < 1e-12 counts as zero.
inline TruncationInterval truncation_interval(const SelectionPolyhedron& poly,
                                              const Eigen::VectorXd& eta, const Eigen::VectorXd& y,
                                              double sigma2) {
    if (eta.size() != poly.A.cols() || y.size() != poly.A.cols())
        throw std::invalid_argument("truncation_interval: dimension mismatch");
    const double eta_sq = eta.squaredNorm();
    if (!(eta_sq > 0.0)) throw std::invalid_argument("truncation_interval: zero contrast vector");
    if (!(sigma2 > 0.0)) throw std::invalid_argument("truncation_interval: require sigma2 > 0");

    const Eigen::VectorXd alpha = (poly.A * (sigma2 * eta)) / (sigma2 * eta_sq);
    const Eigen::VectorXd Ay = poly.A * y;
    const double q = eta.dot(y);

    constexpr double kZeroAlpha = 1e-12;
    const double inf = std::numeric_limits<double>::infinity();
    TruncationInterval iv{-inf, inf, inf};
    for (Eigen::Index j = 0; j < alpha.size(); ++j) {
        const double aj = alpha[j];
        const double slack = poly.b[j] - Ay[j];
        if (std::fabs(aj) < kZeroAlpha) {
            iv.nu_zero = std::min(iv.nu_zero, slack);
        } else if (aj < 0.0) {
            iv.nu_minus = std::max(iv.nu_minus, slack / aj + q);
        } else {
            iv.nu_plus = std::min(iv.nu_plus, slack / aj + q);
        }
    }
    if (iv.nu_minus > iv.nu_plus)
        throw numeric_error("truncation_interval: empty interval (nu- " + std::to_string(iv.nu_minus) +
                            " > nu+ " + std::to_string(iv.nu_plus) +
                            "); response violates the selection polyhedron");
    return iv;
}

} // namespace lassotrack
