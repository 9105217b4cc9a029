#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "lassotrack/errors.hpp"
#include "lassotrack/gaussian.hpp"
#include "lassotrack/truncation_interval.hpp"

namespace lassotrack {

// N(mu, sigma^2) restricted to [lower, upper]; either bound may be infinite.
struct TruncGaussParams {
    double mu;
    double sigma;
    double lower;
    double upper;

    TruncGaussParams(double mu_, double sigma_, double lower_, double upper_)
        : mu(mu_), sigma(sigma_), lower(lower_), upper(upper_) {
        if (!(sigma > 0.0) || std::isnan(mu))
            throw std::invalid_argument("TruncGaussParams: require sigma > 0 and finite mu");
        if (!(lower < upper))
            throw std::invalid_argument("TruncGaussParams: require lower < upper");
    }
};

namespace detail {

// Φ(z2) − Φ(z1) for z1 ≤ z2 without cancellation against 1: same-side pairs
// are differenced in the tail where erfc is relative-accurate.
inline double norm_cdf_diff(double z1, double z2) {
    if (z1 >= 0.0) return 0.5 * (std::erfc(z1 / kSqrt2) - std::erfc(z2 / kSqrt2));
    if (z2 <= 0.0) return 0.5 * (std::erfc(-z2 / kSqrt2) - std::erfc(-z1 / kSqrt2));
    return 1.0 - 0.5 * (std::erfc(z2 / kSqrt2) + std::erfc(-z1 / kSqrt2));
}

} // namespace detail

// CDF of the truncated normal at x, i.e.
//   (Φ((x−μ)/σ) − Φ((a−μ)/σ)) / (Φ((b−μ)/σ) − Φ((a−μ)/σ)),
// clamped to [0, 1]. When the whole truncation window sits in one Gaussian
// tail the ratio is formed from log-tail differences via expm1, so the value
// stays accurate however far the window is from mu (z-scores of hundreds are
// routine during confidence-interval inversion). Throws truncation_underflow
// when the renormalizing mass is not representable even in that form.
inline double trunc_norm_cdf(double x, const TruncGaussParams& p) {
    if (!(x > p.lower)) return 0.0;
    if (!(x < p.upper)) return 1.0;
    const double za = std::isinf(p.lower) ? -std::numeric_limits<double>::infinity()
                                          : (p.lower - p.mu) / p.sigma;
    const double zb = std::isinf(p.upper) ? std::numeric_limits<double>::infinity()
                                          : (p.upper - p.mu) / p.sigma;
    const double zx = (x - p.mu) / p.sigma;

    double num, den;
    if (za >= 0.0) {
        // window in the right tail: work with survival functions
        const double la = norm_logsf(za);
        num = -std::expm1(norm_logsf(zx) - la);
        den = -std::expm1(norm_logsf(zb) - la);
    } else if (zb <= 0.0) {
        // window in the left tail: mirror with CDFs
        const double lb = norm_logcdf(zb);
        const double ea = std::isinf(za) ? 0.0 : std::exp(norm_logcdf(za) - lb);
        num = std::exp(norm_logcdf(zx) - lb) - ea;
        den = 1.0 - ea;
    } else {
        num = detail::norm_cdf_diff(za, zx);
        den = detail::norm_cdf_diff(za, zb);
    }
    if (!(den > 0.0) || !std::isfinite(den))
        throw truncation_underflow(
            "trunc_norm_cdf: truncation window [" + std::to_string(p.lower) + ", " +
            std::to_string(p.upper) + "] carries no mass under mu=" + std::to_string(p.mu) +
            ", sigma=" + std::to_string(p.sigma));
    return std::clamp(num / den, 0.0, 1.0);
}

/// Upper-tail probability of the truncated normal; computed by reflection so
/// small values keep relative accuracy instead of being formed as 1 − CDF.
inline double trunc_norm_sf(double x, const TruncGaussParams& p) {
    return trunc_norm_cdf(-x, TruncGaussParams(-p.mu, p.sigma, -p.upper, -p.lower));
}

// Two-sided selective p-value for the statistic η'y with scale σ·‖η‖ under
// H0: E[η'y] = null_value, conditional on the truncation interval.
inline double selective_pvalue(double stat, double scale, const TruncationInterval& interval,
                               double null_value) {
    if (!(scale > 0.0)) throw std::invalid_argument("selective_pvalue: require scale > 0");
    const double slack = 1e-7 * std::max({1.0, std::fabs(stat), scale});
    if (stat < interval.nu_minus - slack || stat > interval.nu_plus + slack)
        throw numeric_error("selective_pvalue: statistic " + std::to_string(stat) +
                            " lies outside the truncation interval [" +
                            std::to_string(interval.nu_minus) + ", " +
                            std::to_string(interval.nu_plus) + "]");
    const double x = std::clamp(stat, interval.nu_minus, interval.nu_plus);
    const TruncGaussParams params(null_value, scale, interval.nu_minus, interval.nu_plus);
    const double u = trunc_norm_cdf(x, params);
    const double v = trunc_norm_sf(x, params);
    return std::min(1.0, 2.0 * std::min(u, v));
}

namespace detail {

// F(stat; mu) is continuous and strictly decreasing in mu, so each CDF level
// is hit at a unique mu found by bisection inside a geometrically expanded
// bracket around stat.
inline double solve_location_for_cdf_level(double stat, double scale,
                                           const TruncationInterval& interval, double target) {
    const auto cdf_at = [&](double mu) {
        return trunc_norm_cdf(stat, TruncGaussParams(mu, scale, interval.nu_minus, interval.nu_plus));
    };
    double wlo = 10.0 * scale, whi = 10.0 * scale;
    double lo = stat - wlo, hi = stat + whi;
    for (int i = 0; i < 64 && cdf_at(lo) < target; ++i) lo = stat - (wlo *= 2.0);
    for (int i = 0; i < 64 && cdf_at(hi) > target; ++i) hi = stat + (whi *= 2.0);
    if (cdf_at(lo) < target || cdf_at(hi) > target)
        throw numeric_error("invert_ci: failed to bracket CDF level " + std::to_string(target) +
                            " (F(" + std::to_string(lo) + ")=" + std::to_string(cdf_at(lo)) +
                            ", F(" + std::to_string(hi) + ")=" + std::to_string(cdf_at(hi)) + ")");
    for (int i = 0; i < 200 && hi - lo > 1e-9 * scale; ++i) {
        const double mid = 0.5 * (lo + hi);
        (cdf_at(mid) >= target ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

} // namespace detail

// Confidence interval for the location parameter: the set of mu with
// alpha/2 ≤ F(stat; mu) ≤ 1 − alpha/2. L solves F = 1 − alpha/2 and U solves
// F = alpha/2 (the CDF decreases in mu, so the set is the interval [L, U]).
inline std::pair<double, double> invert_ci(double stat, double scale,
                                           const TruncationInterval& interval, double alpha) {
    if (!(scale > 0.0)) throw std::invalid_argument("invert_ci: require scale > 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("invert_ci: require 0 < alpha < 1");
    if (!(stat >= interval.nu_minus && stat <= interval.nu_plus))
        throw numeric_error("invert_ci: statistic outside the truncation interval");
    const double lower = detail::solve_location_for_cdf_level(stat, scale, interval, 1.0 - alpha / 2.0);
    const double upper = detail::solve_location_for_cdf_level(stat, scale, interval, alpha / 2.0);
    return {lower, upper};
}

} // namespace lassotrack
