#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "lassotrack/data.hpp"
#include "lassotrack/errors.hpp"
#include "lassotrack/lasso.hpp"
#include "lassotrack/parallel.hpp"
#include "lassotrack/polyhedron.hpp"
#include "lassotrack/random.hpp"
#include "lassotrack/truncated_gaussian.hpp"

namespace lassotrack {

struct NoiseModel {
    double sigma2 = 0.0;
    int dof = 0;
    bool floored = false;  // degenerate perfect fit hit the variance floor
};

// Variance floor for y lying (numerically) in the span of the selected
// columns. Inference with a floored estimate is unreliable; the flag is
// surfaced as a report warning.
inline constexpr double kSigma2Floor = 1e-12;

/// Residual variance of least squares on the selected columns:
/// ‖y − P_M·y‖² / (T − |M|).
inline NoiseModel estimate_sigma2(const Eigen::MatrixXd& X_M, const Eigen::VectorXd& y) {
    const Eigen::Index T = X_M.rows();
    const Eigen::Index k = X_M.cols();
    if (y.size() != T) throw std::invalid_argument("estimate_sigma2: dimension mismatch");
    if (T <= k)
        throw numeric_error("estimate_sigma2: saturated model (T = " + std::to_string(T) +
                            " <= |M| = " + std::to_string(k) + "), inference impossible");
    const Eigen::LLT<Eigen::MatrixXd> llt(X_M.transpose() * X_M);
    if (llt.info() != Eigen::Success)
        throw numeric_error("estimate_sigma2: selected design is numerically singular");
    const Eigen::VectorXd coef = llt.solve(X_M.transpose() * y);
    const double rss = (y - X_M * coef).squaredNorm();
    NoiseModel nm;
    nm.dof = static_cast<int>(T - k);
    nm.sigma2 = rss / nm.dof;
    if (nm.sigma2 < kSigma2Floor) {
        nm.sigma2 = kSigma2Floor;
        nm.floored = true;
    }
    return nm;
}

namespace detail {

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& X, const std::vector<int>& idx) {
    Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = X.col(idx[i]);
    return out;
}

inline Eigen::VectorXd contrast_from_factor(const Eigen::MatrixXd& X_M,
                                            const Eigen::LLT<Eigen::MatrixXd>& llt_G,
                                            Eigen::Index j_pos) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(X_M.cols());
    e[j_pos] = 1.0;
    return X_M * llt_G.solve(e);
}

} // namespace detail

// η = X_M·(X_M'X_M)⁻¹·e_j, so that η'y is the j-th coefficient of least
// squares restricted to the selected columns.
inline Eigen::VectorXd contrast_for(const Eigen::MatrixXd& X, const std::vector<int>& active_set,
                                    Eigen::Index j_pos) {
    if (j_pos < 0 || j_pos >= static_cast<Eigen::Index>(active_set.size()))
        throw std::invalid_argument("contrast_for: position outside the active set");
    const Eigen::MatrixXd X_M = detail::select_columns(X, active_set);
    const Eigen::MatrixXd G = X_M.transpose() * X_M;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
    if (!(es.eigenvalues().minCoeff() > 1e-12 * std::max(es.eigenvalues().maxCoeff(), 1.0)))
        throw numeric_error("contrast_for: singular selected design");
    return detail::contrast_from_factor(X_M, Eigen::LLT<Eigen::MatrixXd>(G), j_pos);
}

struct CoefficientInference {
    std::string ticker;
    int j = -1;                  // column in the panel
    double beta_selected = 0.0;  // η'y
    Eigen::VectorXd eta;
    TruncationInterval interval{0.0, 0.0, 0.0};
    double p_value = 1.0;
    std::pair<double, double> ci{0.0, 0.0};
    bool retained = false;
};

struct InferenceDiagnostics {
    int lasso_iterations = 0;
    bool lasso_converged = false;
    double kkt_max_violation = 0.0;
    double membership_violation = -std::numeric_limits<double>::infinity();
    Eigen::Index polyhedron_rows = 0;
    double critical_lambda = 0.0;
    int sigma2_dof = 0;
    bool sigma2_floored = false;
    std::vector<std::string> warnings;
};

struct InferenceReport {
    std::vector<CoefficientInference> records;
    int p_selected = 0;
    int p_retained = 0;
    double lambda = 0.0;
    double alpha = 0.0;
    double sigma2 = 0.0;
    Eigen::VectorXd lasso_beta;
    InferenceDiagnostics diagnostics;
};

enum class Sigma2Mode { PooledRows, PerEvent };

struct PosiOptions {
    double tol = 1e-6;
    int max_iter = 100000;
    int threads = 1;
    Sigma2Mode sigma2_mode = Sigma2Mode::PooledRows;
    std::optional<EventBlocks> events;       // required for PerEvent pooling
    std::optional<double> sigma2_override;   // known-variance mode
};

namespace detail {

// Per-event residual variances pooled by their degrees of freedom. Each block
// must have more rows than selected columns.
inline NoiseModel pooled_event_sigma2(const Eigen::MatrixXd& X_M, const Eigen::VectorXd& y,
                                      const EventBlocks& events) {
    const Eigen::Index k = X_M.cols();
    double rss_sum = 0.0;
    int dof_sum = 0;
    for (const auto& [first, last] : events.ranges) {
        const Eigen::Index m = last - first;
        if (m <= k)
            throw numeric_error("per-event sigma2 needs m > |M| (m = " + std::to_string(m) +
                                ", |M| = " + std::to_string(k) + ")");
        const Eigen::MatrixXd Xe = X_M.middleRows(first, m);
        const Eigen::VectorXd ye = y.segment(first, m);
        const Eigen::LLT<Eigen::MatrixXd> llt(Xe.transpose() * Xe);
        if (llt.info() != Eigen::Success)
            throw numeric_error("per-event sigma2: selected design is singular on the block at row " +
                                std::to_string(first));
        rss_sum += (ye - Xe * llt.solve(Xe.transpose() * ye)).squaredNorm();
        dof_sum += static_cast<int>(m - k);
    }
    NoiseModel nm;
    nm.dof = dof_sum;
    nm.sigma2 = rss_sum / dof_sum;
    if (nm.sigma2 < kSigma2Floor) {
        nm.sigma2 = kSigma2Floor;
        nm.floored = true;
    }
    return nm;
}

} // namespace detail

// Exact post-selection inference pipeline: fit the Lasso, encode the selection
// event as a polyhedron, and test every selected coefficient against the
// truncated-Gaussian law of its selected-model contrast. A coefficient is
// retained when its two-sided selective p-value is at least alpha, which is
// the CDF-sandwich rule alpha/2 ≤ F ≤ 1 − alpha/2 evaluated at the null.
inline InferenceReport run_exact_posi(const ReturnsPanel& panel, double lambda, double alpha,
                                      const PosiOptions& opts = {}) {
    if (!(lambda > 0.0)) throw std::invalid_argument("run_exact_posi: require lambda > 0");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("run_exact_posi: require 0 < alpha < 1");
    if (panel.r_b.size() != panel.T())
        throw std::invalid_argument("run_exact_posi: panel has no benchmark series");

    InferenceReport report;
    report.lambda = lambda;
    report.alpha = alpha;

    const LassoProblem prob(panel.X, panel.r_b, lambda, opts.tol, opts.max_iter);
    const LassoFit fit = fit_lasso(prob);
    report.lasso_beta = fit.beta;
    report.diagnostics.lasso_iterations = fit.iterations;
    report.diagnostics.lasso_converged = fit.converged;
    report.diagnostics.critical_lambda = critical_lambda(panel.X, panel.r_b);
    if (!fit.converged)
        report.diagnostics.warnings.push_back("lasso did not converge within " +
                                              std::to_string(opts.max_iter) + " sweeps");
    report.diagnostics.kkt_max_violation = check_kkt(fit, prob).max_violation;

    report.p_selected = static_cast<int>(fit.active_set.size());
    if (fit.active_set.empty()) {
        report.diagnostics.warnings.push_back("empty active set (lambda >= critical value " +
                                              std::to_string(report.diagnostics.critical_lambda) + ")");
        return report;
    }

    const SelectionPolyhedron poly = build_polyhedron(panel.X, lambda, fit.active_set, fit.signs);
    report.diagnostics.polyhedron_rows = poly.A.rows();
    report.diagnostics.membership_violation = verify_membership(poly, panel.r_b);
    if (report.diagnostics.membership_violation > 1e-4)
        throw numeric_error("selection polyhedron violated by the observed response (violation " +
                            std::to_string(report.diagnostics.membership_violation) + ")");
    if (report.diagnostics.membership_violation > 1e-8)
        report.diagnostics.warnings.push_back(
            "observed response violates the selection polyhedron by " +
            std::to_string(report.diagnostics.membership_violation) + "; fit tolerance may be loose");

    const Eigen::MatrixXd X_M = detail::select_columns(panel.X, fit.active_set);
    NoiseModel noise;
    if (opts.sigma2_override) {
        noise.sigma2 = *opts.sigma2_override;
        noise.dof = 0;
        if (!(noise.sigma2 > 0.0))
            throw std::invalid_argument("run_exact_posi: sigma2 override must be positive");
    } else if (opts.sigma2_mode == Sigma2Mode::PerEvent) {
        if (!opts.events) throw std::invalid_argument("run_exact_posi: PerEvent sigma2 needs events");
        noise = detail::pooled_event_sigma2(X_M, panel.r_b, *opts.events);
    } else {
        noise = estimate_sigma2(X_M, panel.r_b);
    }
    report.sigma2 = noise.sigma2;
    report.diagnostics.sigma2_dof = noise.dof;
    report.diagnostics.sigma2_floored = noise.floored;
    if (noise.floored)
        report.diagnostics.warnings.push_back(
            "sigma2 hit the degeneracy floor; the response is numerically inside the selected span "
            "and the selective tests are unreliable");

    const Eigen::LLT<Eigen::MatrixXd> llt_G(X_M.transpose() * X_M);
    const int n_records = report.p_selected;
    report.records.resize(static_cast<std::size_t>(n_records));
    std::vector<std::vector<std::string>> warn(static_cast<std::size_t>(n_records));

    parallel_for(n_records, opts.threads, [&](int i) {
        const auto iu = static_cast<std::size_t>(i);
        CoefficientInference rec;
        rec.j = fit.active_set[iu];
        rec.ticker = rec.j < static_cast<int>(panel.tickers.size())
                         ? panel.tickers[static_cast<std::size_t>(rec.j)]
                         : "col" + std::to_string(rec.j);
        rec.eta = detail::contrast_from_factor(X_M, llt_G, i);
        rec.beta_selected = rec.eta.dot(panel.r_b);
        rec.interval = truncation_interval(poly, rec.eta, panel.r_b, noise.sigma2);
        const double scale = std::sqrt(noise.sigma2) * rec.eta.norm();
        const double nan = std::numeric_limits<double>::quiet_NaN();
        try {
            rec.p_value = selective_pvalue(rec.beta_selected, scale, rec.interval, 0.0);
        } catch (const truncation_underflow& e) {
            rec.p_value = 0.0;
            warn[iu].push_back(rec.ticker + ": truncated CDF underflow, p-value treated as extreme (" +
                               e.what() + ")");
        }
        rec.retained = rec.p_value >= alpha;
        try {
            rec.ci = invert_ci(rec.beta_selected, scale, rec.interval, alpha);
        } catch (const numeric_error& e) {
            rec.ci = {nan, nan};
            warn[iu].push_back(rec.ticker + ": confidence interval unavailable (" + e.what() + ")");
        }
        report.records[iu] = std::move(rec);
    });

    for (auto& w : warn)
        for (auto& msg : w) report.diagnostics.warnings.push_back(std::move(msg));
    for (const auto& rec : report.records)
        if (rec.retained) ++report.p_retained;
    return report;
}

/// Kolmogorov–Smirnov distance of a sample from Unif(0,1).
inline double ks_distance_uniform(std::vector<double> sample) {
    if (sample.empty()) throw std::invalid_argument("ks_distance_uniform: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        d = std::max(d, (static_cast<double>(i) + 1.0) / n - sample[i]);
        d = std::max(d, sample[i] - static_cast<double>(i) / n);
    }
    return d;
}

struct SyntheticScenario {
    int T = 100;
    int p = 20;
    double sigma = 1.0;
    double lambda = 0.25;
    double alpha = 0.05;
    int signal_count = 0;       // leading coordinates of beta* carrying signal
    double signal_value = 0.0;
    double tol = 1e-8;
    int max_iter = 200000;
    bool known_sigma = false;   // pass the true sigma^2 instead of estimating it
};

// One selected coefficient instance from one replication; everything needed
// to audit its p-value and interval after the fact.
struct CalibrationRecord {
    int replication = 0;
    int column = 0;
    double stat = 0.0;
    double scale = 0.0;
    double nu_minus = 0.0;
    double nu_plus = 0.0;
    double ci_lo = 0.0;
    double ci_hi = 0.0;
    double p_value = 0.0;
    double target = 0.0;  // true projected parameter η'(X·beta*)
    bool is_null = false;
    bool retained = false;
};

struct CalibrationReport {
    SyntheticScenario scenario;
    int replications = 0;
    std::uint64_t seed = 0;
    int reps_with_selection = 0;
    int total_selected = 0;
    std::vector<CalibrationRecord> records;
    std::vector<std::pair<int, int>> per_rep_counts;  // (p_selected, p_retained) per replication
    std::vector<double> null_pvalues;                 // pooled over truly-null selected coefficients
    std::vector<std::pair<int, int>> pvalue_origin;   // (replication, column) per pooled p-value
    double ks_distance = std::numeric_limits<double>::quiet_NaN();
    int ci_count = 0;
    int ci_covered = 0;
    int naive_count = 0;
    int naive_covered = 0;
    std::vector<std::string> warnings;

    double coverage() const { return ci_count ? static_cast<double>(ci_covered) / ci_count : 0.0; }
    double naive_coverage() const {
        return naive_count ? static_cast<double>(naive_covered) / naive_count : 0.0;
    }
};

// Monte-Carlo calibration: a fixed design X, replicated responses
// y = X·beta* + sigma·eps, the full selective pipeline per replication.
// Reports the KS distance of pooled null p-values from Unif(0,1) and the
// empirical coverage of the true projected parameter η'(X·beta*) by both the
// selective interval and the naive ±z interval on the same statistics.
inline CalibrationReport calibrate_monte_carlo(const SyntheticScenario& scenario, int replications,
                                               std::uint64_t seed, int threads = 1) {
    if (replications < 100)
        throw std::invalid_argument("calibrate_monte_carlo: require replications >= 100");
    if (scenario.T < 2 || scenario.p < 1 || !(scenario.sigma > 0.0) || !(scenario.lambda > 0.0))
        throw std::invalid_argument("calibrate_monte_carlo: bad scenario");
    if (scenario.signal_count < 0 || scenario.signal_count > scenario.p)
        throw std::invalid_argument("calibrate_monte_carlo: signal_count out of range");

    Rng design_rng(derive_seed(seed, 0xDE516A));
    Eigen::MatrixXd X(scenario.T, scenario.p);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        for (Eigen::Index j = 0; j < X.cols(); ++j) X(i, j) = design_rng.normal();

    Eigen::VectorXd beta_star = Eigen::VectorXd::Zero(scenario.p);
    for (int j = 0; j < scenario.signal_count; ++j) beta_star[j] = scenario.signal_value;
    const Eigen::VectorXd mu = X * beta_star;

    struct RepOutcome {
        std::vector<CalibrationRecord> records;
        int selected = 0;
        int retained = 0;
        int ci_count = 0, ci_covered = 0;
        int naive_count = 0, naive_covered = 0;
        std::vector<std::string> warnings;
    };
    std::vector<RepOutcome> outcomes(static_cast<std::size_t>(replications));

    PosiOptions opts;
    opts.tol = scenario.tol;
    opts.max_iter = scenario.max_iter;
    if (scenario.known_sigma) opts.sigma2_override = scenario.sigma * scenario.sigma;

    ReturnsPanel base;
    base.X = X;
    base.tickers.reserve(static_cast<std::size_t>(scenario.p));
    for (int j = 0; j < scenario.p; ++j) base.tickers.push_back("V" + std::to_string(j));
    base.dates.assign(static_cast<std::size_t>(scenario.T), "");

    parallel_for(replications, threads, [&](int r) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(r) + 1));
        ReturnsPanel panel = base;
        panel.r_b.resize(scenario.T);
        for (int t = 0; t < scenario.T; ++t) panel.r_b[t] = mu[t] + scenario.sigma * rng.normal();

        RepOutcome& out = outcomes[static_cast<std::size_t>(r)];
        const InferenceReport report = run_exact_posi(panel, scenario.lambda, scenario.alpha, opts);
        out.selected = report.p_selected;
        out.retained = report.p_retained;
        const double z = norm_quantile(1.0 - scenario.alpha / 2.0);
        for (const auto& rec : report.records) {
            CalibrationRecord row;
            row.replication = r;
            row.column = rec.j;
            row.stat = rec.beta_selected;
            row.scale = std::sqrt(report.sigma2) * rec.eta.norm();
            row.nu_minus = rec.interval.nu_minus;
            row.nu_plus = rec.interval.nu_plus;
            row.ci_lo = rec.ci.first;
            row.ci_hi = rec.ci.second;
            row.p_value = rec.p_value;
            row.target = rec.eta.dot(mu);
            row.is_null = beta_star[rec.j] == 0.0;
            row.retained = rec.retained;
            if (std::isfinite(row.ci_lo) && std::isfinite(row.ci_hi)) {
                ++out.ci_count;
                if (row.ci_lo <= row.target && row.target <= row.ci_hi) ++out.ci_covered;
            }
            const double half = z * row.scale;
            ++out.naive_count;
            if (row.stat - half <= row.target && row.target <= row.stat + half) ++out.naive_covered;
            out.records.push_back(row);
        }
        for (const auto& w : report.diagnostics.warnings)
            out.warnings.push_back("rep " + std::to_string(r) + ": " + w);
    });

    CalibrationReport report;
    report.scenario = scenario;
    report.replications = replications;
    report.seed = seed;
    for (const auto& out : outcomes) {
        if (out.selected > 0) ++report.reps_with_selection;
        report.total_selected += out.selected;
        report.per_rep_counts.emplace_back(out.selected, out.retained);
        for (const auto& row : out.records) {
            report.records.push_back(row);
            if (row.is_null) {
                report.null_pvalues.push_back(row.p_value);
                report.pvalue_origin.emplace_back(row.replication, row.column);
            }
        }
        report.ci_count += out.ci_count;
        report.ci_covered += out.ci_covered;
        report.naive_count += out.naive_count;
        report.naive_covered += out.naive_covered;
        report.warnings.insert(report.warnings.end(), out.warnings.begin(), out.warnings.end());
    }
    if (report.total_selected == 0)
        throw numeric_error("calibrate_monte_carlo: no selections in any replication; "
                            "lambda is above the critical value for this scenario");
    if (!report.null_pvalues.empty()) report.ks_distance = ks_distance_uniform(report.null_pvalues);
    return report;
}

} // namespace lassotrack
