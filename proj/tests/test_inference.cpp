#include <catch2/catch.hpp>

#include <cmath>
#include <set>

#include "lassotrack/inference.hpp"
#include "lassotrack/random.hpp"
#include "lassotrack/report_io.hpp"
#include "oracles.hpp"

using namespace lassotrack;

namespace {

ReturnsPanel synthetic_panel(Rng& rng, int T, int p, const Eigen::VectorXd& beta_star, double sigma) {
    ReturnsPanel panel;
    panel.X = oracle::random_matrix(T, p, rng);
    panel.r_b = panel.X * beta_star + sigma * oracle::random_vector(T, rng);
    for (int j = 0; j < p; ++j) panel.tickers.push_back("V" + std::to_string(j));
    panel.dates.assign(static_cast<std::size_t>(T), "");
    return panel;
}

} // namespace

TEST_CASE("estimate_sigma2") {
    Rng rng(61);
    SECTION("matches the QR projection oracle") {
        const Eigen::MatrixXd Xm = oracle::random_matrix(20, 3, rng);
        const Eigen::VectorXd e = oracle::random_vector(20, rng);
        const Eigen::VectorXd y = Xm * Eigen::VectorXd::Ones(3) + e;
        const NoiseModel nm = estimate_sigma2(Xm, y);
        const Eigen::VectorXd e_perp = oracle::qr_residual(Xm, e);
        REQUIRE(nm.dof == 17);
        REQUIRE(nm.sigma2 == Approx(e_perp.squaredNorm() / 17.0).epsilon(1e-10));
        REQUIRE_FALSE(nm.floored);
    }
    SECTION("saturated model is an error") {
        const Eigen::MatrixXd Xm = oracle::random_matrix(3, 3, rng);
        REQUIRE_THROWS_AS(estimate_sigma2(Xm, Eigen::VectorXd::Ones(3)), numeric_error);
    }
    SECTION("perfect fit hits the floor with a flag") {
        const Eigen::MatrixXd Xm = oracle::random_matrix(10, 2, rng);
        const Eigen::VectorXd y = Xm * Eigen::VectorXd::Ones(2);
        const NoiseModel nm = estimate_sigma2(Xm, y);
        REQUIRE(nm.floored);
        REQUIRE(nm.sigma2 == kSigma2Floor);
    }
    SECTION("singular selected design is rejected") {
        Eigen::MatrixXd Xm(8, 2);
        Xm.col(0) = oracle::random_vector(8, rng);
        Xm.col(1) = 3.0 * Xm.col(0);
        REQUIRE_THROWS_AS(estimate_sigma2(Xm, Eigen::VectorXd::Ones(8)), numeric_error);
    }
}

TEST_CASE("contrast_for") {
    Rng rng(62);
    SECTION("orthonormal selected design returns the column itself") {
        const Eigen::MatrixXd Q = oracle::orthonormal_design(15, 3, rng);
        const Eigen::VectorXd eta = contrast_for(Q, {0, 1, 2}, 1);
        REQUIRE((eta - Q.col(1)).cwiseAbs().maxCoeff() < 1e-10);
    }
    SECTION("eta' X_M = e_j' for a general design") {
        const Eigen::MatrixXd X = oracle::random_matrix(25, 6, rng);
        const std::vector<int> active = {1, 3, 4};
        for (int pos = 0; pos < 3; ++pos) {
            const Eigen::VectorXd eta = contrast_for(X, active, pos);
            for (int i = 0; i < 3; ++i)
                REQUIRE(eta.dot(X.col(active[static_cast<std::size_t>(i)])) ==
                        Approx(i == pos ? 1.0 : 0.0).margin(1e-10));
        }
    }
    SECTION("3x2 design matches the pseudo-inverse oracle") {
        Eigen::MatrixXd X(3, 2);
        X << 1.0, 0.5, -2.0, 1.5, 0.25, -1.0;
        const Eigen::VectorXd eta = contrast_for(X, {0, 1}, 1);
        const Eigen::VectorXd expected = oracle::pseudoinverse_contrast(X, 1);
        REQUIRE((eta - expected).cwiseAbs().maxCoeff() < 1e-10);
    }
    SECTION("singular selected design") {
        Eigen::MatrixXd X(6, 2);
        X.col(0) = Eigen::VectorXd::LinSpaced(6, 1.0, 6.0);
        X.col(1) = 2.0 * X.col(0);
        REQUIRE_THROWS_AS(contrast_for(X, {0, 1}, 0), numeric_error);
    }
}

TEST_CASE("run_exact_posi with lambda above critical returns an empty report") {
    Rng rng(63);
    const ReturnsPanel panel = synthetic_panel(rng, 40, 6, Eigen::VectorXd::Zero(6), 1.0);
    const double lam = 1.5 * critical_lambda(panel.X, panel.r_b);
    const InferenceReport report = run_exact_posi(panel, lam, 0.05);
    REQUIRE(report.p_selected == 0);
    REQUIRE(report.p_retained == 0);
    REQUIRE(report.records.empty());
    REQUIRE_FALSE(report.diagnostics.warnings.empty());
}

TEST_CASE("run_exact_posi record structure and invariants") {
    Rng rng(64);
    Eigen::VectorXd beta_star = Eigen::VectorXd::Zero(8);
    beta_star[0] = 0.6;
    beta_star[3] = -0.4;
    const ReturnsPanel panel = synthetic_panel(rng, 60, 8, beta_star, 1.0);
    PosiOptions opts;
    opts.tol = 1e-10;
    const double lam = 0.35 * critical_lambda(panel.X, panel.r_b);
    const InferenceReport report = run_exact_posi(panel, lam, 0.05, opts);

    REQUIRE(report.p_selected > 0);
    REQUIRE(report.p_selected == static_cast<int>(report.records.size()));
    REQUIRE(report.p_retained <= report.p_selected);
    REQUIRE(report.diagnostics.membership_violation <= 1e-8);
    REQUIRE(report.diagnostics.kkt_max_violation <= 1e-5);

    for (const auto& rec : report.records) {
        // statistic is the stored contrast applied to the response
        REQUIRE(rec.beta_selected == Approx(rec.eta.dot(panel.r_b)).margin(1e-12));
        // statistic lies inside its truncation interval
        REQUIRE(rec.beta_selected >= rec.interval.nu_minus - 1e-9);
        REQUIRE(rec.beta_selected <= rec.interval.nu_plus + 1e-9);
        REQUIRE(rec.p_value >= 0.0);
        REQUIRE(rec.p_value <= 1.0);
        // retention rule equivalences (skip knife-edge p values)
        if (std::fabs(rec.p_value - report.alpha) > 1e-9) {
            REQUIRE(rec.retained == (rec.p_value >= report.alpha));
            REQUIRE(rec.retained == (rec.ci.first <= 0.0 && 0.0 <= rec.ci.second));
        }
        REQUIRE(rec.ci.first < rec.ci.second);
        // ticker mapping
        REQUIRE(rec.ticker == "V" + std::to_string(rec.j));
    }
}

TEST_CASE("run_exact_posi is deterministic") {
    Rng rng(65);
    Eigen::VectorXd beta_star = Eigen::VectorXd::Zero(5);
    beta_star[1] = 0.5;
    const ReturnsPanel panel = synthetic_panel(rng, 50, 5, beta_star, 1.0);
    const double lam = 0.3 * critical_lambda(panel.X, panel.r_b);
    PosiOptions opts;
    opts.threads = 2;  // parallel execution must not change the result
    const InferenceReport a = run_exact_posi(panel, lam, 0.05, opts);
    opts.threads = 1;
    const InferenceReport b = run_exact_posi(panel, lam, 0.05, opts);
    REQUIRE(report_to_json(a).dump() == report_to_json(b).dump());
}

TEST_CASE("sigma2 modes") {
    Rng rng(66);
    Eigen::VectorXd beta_star = Eigen::VectorXd::Zero(4);
    beta_star[0] = 1.0;
    const ReturnsPanel panel = synthetic_panel(rng, 60, 4, beta_star, 0.5);
    const double lam = 0.3 * critical_lambda(panel.X, panel.r_b);

    SECTION("override is used verbatim") {
        PosiOptions opts;
        opts.sigma2_override = 0.17;
        const InferenceReport report = run_exact_posi(panel, lam, 0.05, opts);
        REQUIRE(report.sigma2 == 0.17);
        REQUIRE(report.diagnostics.sigma2_dof == 0);
    }
    SECTION("per-event pooling averages block estimates by dof") {
        PosiOptions opts;
        opts.sigma2_mode = Sigma2Mode::PerEvent;
        opts.events = make_events(60, 3, 20, 0);
        const InferenceReport report = run_exact_posi(panel, lam, 0.05, opts);
        REQUIRE(report.sigma2 > 0.0);
        // pooled dof = sum over blocks of (m − |M|)
        REQUIRE(report.diagnostics.sigma2_dof == 3 * (20 - report.p_selected));
    }
    SECTION("per-event pooling requires m > |M|") {
        PosiOptions opts;
        opts.sigma2_mode = Sigma2Mode::PerEvent;
        opts.events = make_events(60, 60, 1, 0);  // single-row blocks can never exceed |M| >= 1
        REQUIRE_THROWS_AS(run_exact_posi(panel, lam, 0.05, opts), numeric_error);
    }
}

TEST_CASE("null predictors are retained at roughly 1 - alpha of their selections") {
    // one strong signal plus nine nulls; the strong coordinate rejects its
    // null essentially always, each null coordinate is retained ~95% of the
    // times it gets selected
    Rng scenario_rng(67);
    const int T = 100, p = 10, reps = 250;
    const Eigen::MatrixXd X = oracle::random_matrix(T, p, scenario_rng);
    Eigen::VectorXd beta_star = Eigen::VectorXd::Zero(p);
    beta_star[0] = 1.0;  // ~10 sigma on the coefficient scale
    const Eigen::VectorXd mu = X * beta_star;

    int strong_selected = 0;
    int strong_rejected = 0;
    int null_selected = 0;
    int null_retained = 0;
    PosiOptions opts;
    opts.tol = 1e-9;

    for (int r = 0; r < reps; ++r) {
        Rng rng(derive_seed(991, static_cast<std::uint64_t>(r)));
        ReturnsPanel panel;
        panel.X = X;
        panel.r_b = mu + oracle::random_vector(T, rng);
        for (int j = 0; j < p; ++j) panel.tickers.push_back("V" + std::to_string(j));
        panel.dates.assign(T, "");
        const InferenceReport report = run_exact_posi(panel, 0.35, 0.05, opts);
        for (const auto& rec : report.records) {
            if (rec.j == 0) {
                ++strong_selected;
                if (rec.p_value < 0.05) ++strong_rejected;
            } else {
                ++null_selected;
                if (rec.retained) ++null_retained;
            }
        }
    }

    INFO("strong selected " << strong_selected << "/" << reps << ", rejected " << strong_rejected);
    INFO("null selected " << null_selected << ", retained " << null_retained);
    REQUIRE(strong_selected == reps);
    REQUIRE(strong_rejected > 0.95 * reps);
    REQUIRE(null_selected > 100);
    const double retention = static_cast<double>(null_retained) / null_selected;
    REQUIRE(retention == Approx(0.95).margin(0.03));
}

TEST_CASE("calibrate_monte_carlo") {
    SECTION("validation") {
        REQUIRE_THROWS_AS(calibrate_monte_carlo({}, 50, 1), std::invalid_argument);
        SyntheticScenario bad;
        bad.lambda = 1e6;  // far above any critical value: nothing ever selected
        bad.T = 30;
        bad.p = 5;
        REQUIRE_THROWS_AS(calibrate_monte_carlo(bad, 120, 1), numeric_error);
    }
    SECTION("small null run produces sane statistics") {
        SyntheticScenario scenario;
        scenario.T = 40;
        scenario.p = 8;
        scenario.lambda = 0.4;
        const CalibrationReport report = calibrate_monte_carlo(scenario, 200, 7, 2);
        REQUIRE(report.total_selected > 0);
        REQUIRE(report.null_pvalues.size() == static_cast<std::size_t>(report.total_selected));
        REQUIRE(std::isfinite(report.ks_distance));
        REQUIRE(report.ks_distance < 0.2);
        REQUIRE(report.ci_count > 0);
        REQUIRE(report.coverage() > 0.85);
        REQUIRE(report.naive_coverage() < report.coverage());
    }
    SECTION("deterministic given the seed, regardless of threads") {
        SyntheticScenario scenario;
        scenario.T = 30;
        scenario.p = 5;
        scenario.lambda = 0.5;
        const CalibrationReport a = calibrate_monte_carlo(scenario, 120, 3, 1);
        const CalibrationReport b = calibrate_monte_carlo(scenario, 120, 3, 2);
        REQUIRE(a.null_pvalues == b.null_pvalues);
        REQUIRE(a.ci_covered == b.ci_covered);
        REQUIRE(a.ks_distance == b.ks_distance);
    }
    SECTION("known-sigma mode covers nonzero projected targets") {
        SyntheticScenario scenario;
        scenario.T = 80;
        scenario.p = 10;
        scenario.lambda = 0.35;
        scenario.signal_count = 2;
        scenario.signal_value = 0.4;
        scenario.known_sigma = true;
        const CalibrationReport report = calibrate_monte_carlo(scenario, 400, 17, 2);
        REQUIRE(report.ci_count > 400);
        bool saw_nonzero_target = false;
        for (const auto& rec : report.records)
            if (std::fabs(rec.target) > 0.05) saw_nonzero_target = true;
        REQUIRE(saw_nonzero_target);
        REQUIRE(report.coverage() == Approx(0.95).margin(0.03));
        REQUIRE(report.naive_coverage() < report.coverage());
    }
}

TEST_CASE("report JSON carries the documented fields") {
    Rng rng(68);
    Eigen::VectorXd beta_star = Eigen::VectorXd::Zero(4);
    beta_star[2] = 0.8;
    const ReturnsPanel panel = synthetic_panel(rng, 40, 4, beta_star, 1.0);
    const InferenceReport report =
        run_exact_posi(panel, 0.3 * critical_lambda(panel.X, panel.r_b), 0.05);
    REQUIRE(report.p_selected > 0);

    const nlohmann::json j = report_to_json(report);
    for (const char* key : {"records", "p_selected", "p_retained", "lambda", "alpha", "sigma2",
                            "diagnostics"})
        REQUIRE(j.contains(key));
    const auto& rec = j["records"][0];
    for (const char* key : {"ticker", "j", "beta_selected", "eta", "interval", "p_value", "ci",
                            "retained"})
        REQUIRE(rec.contains(key));
    REQUIRE(rec["eta"].size() == 40);
    REQUIRE(rec["interval"].contains("nu_minus"));
    REQUIRE(rec["interval"].contains("nu_plus"));
    REQUIRE(rec["interval"].contains("nu_zero"));

    const nlohmann::json trimmed = report_to_json(report, /*include_eta=*/false);
    REQUIRE_FALSE(trimmed["records"][0].contains("eta"));
}
