#pragma once

#include <cmath>
#include <limits>

namespace lassotrack {

namespace detail {
inline constexpr double kSqrt2 = 1.41421356237309504880168872420969808;
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640561764;
} // namespace detail

/// Standard normal CDF Φ(z).
inline double norm_cdf(double z) { return 0.5 * std::erfc(-z / detail::kSqrt2); }

/// Standard normal survival function Q(z) = 1 − Φ(z), accurate in the right tail.
inline double norm_sf(double z) { return 0.5 * std::erfc(z / detail::kSqrt2); }

// log Q(z), stable for arbitrarily large z. Below the crossover, erfc keeps
// full relative accuracy and Q(12) ≈ 1.8e-33 is far from underflow; above it,
// the divergent asymptotic series Q(z) = φ(z)/z · Σ (−1)^k (2k−1)!!/z^{2k}
// is summed until the terms stop shrinking.
inline double norm_logsf(double z) {
    if (std::isinf(z)) return z > 0 ? -std::numeric_limits<double>::infinity() : 0.0;
    if (z < 12.0) return std::log(norm_sf(z));
    const double zsq = z * z;
    double term = 1.0;
    double sum = 1.0;
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 30; ++k) {
        term *= -(2.0 * k - 1.0) / zsq;
        if (std::fabs(term) >= prev) break;
        sum += term;
        prev = std::fabs(term);
        if (prev < 1e-18 * std::fabs(sum)) break;
    }
    return -0.5 * zsq - std::log(z) - detail::kLogSqrt2Pi + std::log(sum);
}

/// log Φ(z), stable in the left tail.
inline double norm_logcdf(double z) { return norm_logsf(-z); }

// Inverse of norm_cdf by bisection; |z| > 40 is saturated to the bracket edge.
// Only used where a quantile is needed once per report, so speed is irrelevant.
inline double norm_quantile(double u) {
    if (u <= 0.0) return -std::numeric_limits<double>::infinity();
    if (u >= 1.0) return std::numeric_limits<double>::infinity();
    double lo = -40.0, hi = 40.0;
    for (int i = 0; i < 200 && hi - lo > 1e-14; ++i) {
        const double mid = 0.5 * (lo + hi);
        (norm_cdf(mid) < u ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace lassotrack
