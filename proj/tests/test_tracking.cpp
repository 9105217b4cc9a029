#include <catch2/catch.hpp>

#include <algorithm>
#include <numeric>
#include <random>

#include "lassotrack/random.hpp"
#include "lassotrack/tracking.hpp"
#include "oracles.hpp"

using namespace lassotrack;

TEST_CASE("ete hand values") {
    SECTION("perfect replication is zero") {
        Rng rng(51);
        const Eigen::MatrixXd X = oracle::random_matrix(12, 3, rng);
        const Eigen::VectorXd w = oracle::random_vector(3, rng);
        REQUIRE(ete(X, w, X * w) == Approx(0.0).margin(1e-18));
    }
    SECTION("zero weights reduce to the mean square of the benchmark") {
        Rng rng(52);
        const Eigen::MatrixXd X = oracle::random_matrix(8, 2, rng);
        const Eigen::VectorXd r_b = oracle::random_vector(8, rng);
        REQUIRE(ete(X, Eigen::VectorXd::Zero(2), r_b) ==
                Approx(r_b.squaredNorm() / 8.0).epsilon(1e-12));
    }
    SECTION("hand arithmetic") {
        Eigen::MatrixXd X(2, 1);
        X << 0.1, 0.0;
        Eigen::VectorXd w(1);
        w << 1.0;
        REQUIRE(ete(X, w, Eigen::VectorXd::Zero(2)) == Approx(0.005).epsilon(1e-12));
    }
    SECTION("dimension mismatch") {
        REQUIRE_THROWS_AS(ete(Eigen::MatrixXd::Ones(3, 2), Eigen::VectorXd::Ones(3),
                              Eigen::VectorXd::Ones(3)),
                          std::invalid_argument);
    }
}

TEST_CASE("ete is invariant under simultaneous row permutation") {
    Rng rng(53);
    const Eigen::MatrixXd X = oracle::random_matrix(10, 4, rng);
    const Eigen::VectorXd w = oracle::random_vector(4, rng);
    const Eigen::VectorXd r_b = oracle::random_vector(10, rng);

    std::vector<int> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), std::mt19937(99));
    Eigen::MatrixXd Xp(10, 4);
    Eigen::VectorXd rp(10);
    for (int i = 0; i < 10; ++i) {
        Xp.row(i) = X.row(perm[static_cast<std::size_t>(i)]);
        rp[i] = r_b[perm[static_cast<std::size_t>(i)]];
    }
    REQUIRE(ete(Xp, w, rp) == Approx(ete(X, w, r_b)).epsilon(1e-12));
}

TEST_CASE("pearson_corr") {
    Eigen::VectorXd x(3);
    x << 1.0, 2.0, 3.0;

    SECTION("self and anti correlation") {
        REQUIRE(pearson_corr(x, x) == Approx(1.0).epsilon(1e-12));
        REQUIRE(pearson_corr(x, (-x).eval()) == Approx(-1.0).epsilon(1e-12));
    }
    SECTION("hand computation") {
        Eigen::VectorXd b(3);
        b << 2.0, 4.0, 7.0;
        REQUIRE(pearson_corr(x, b) == Approx(0.9933992677987828).epsilon(1e-10));
    }
    SECTION("constant series is an explicit error") {
        REQUIRE_THROWS_AS(pearson_corr(x, Eigen::VectorXd::Ones(3)), numeric_error);
    }
    SECTION("positive affine invariance") {
        Rng rng(54);
        const Eigen::VectorXd a = oracle::random_vector(20, rng);
        const Eigen::VectorXd b = oracle::random_vector(20, rng);
        const Eigen::VectorXd affine = 2.5 * b + Eigen::VectorXd::Constant(20, 0.3);
        REQUIRE(pearson_corr(a, affine) == Approx(pearson_corr(a, b)).epsilon(1e-12));
    }
    SECTION("length checks") {
        REQUIRE_THROWS_AS(pearson_corr(x, Eigen::VectorXd::Ones(2)), std::invalid_argument);
        REQUIRE_THROWS_AS(pearson_corr(Eigen::VectorXd::Ones(1), Eigen::VectorXd::Ones(1)),
                          std::invalid_argument);
    }
}

TEST_CASE("evaluate_tracking") {
    Rng rng(55);
    ReturnsPanel panel;
    panel.X = oracle::random_matrix(30, 5, rng);
    panel.tickers = {"A", "B", "C", "D", "E"};
    panel.dates.assign(30, "");
    Eigen::VectorXd beta(5);
    beta << 0.5, 0.0, -0.2, 0.0, 0.1;
    panel.r_b = panel.X * beta + 0.01 * oracle::random_vector(30, rng);

    const TrackingResult result = evaluate_tracking(panel, beta);
    REQUIRE(result.tracked.size() == 30);
    REQUIRE(result.ete == Approx(ete(panel.X, beta, panel.r_b)));
    REQUIRE(result.corr > 0.99);
    REQUIRE(result.corr <= 1.0);
    REQUIRE(result.ete >= 0.0);

    SECTION("zero beta makes the correlation undefined") {
        REQUIRE_THROWS_AS(evaluate_tracking(panel, Eigen::VectorXd::Zero(5)), numeric_error);
    }
    SECTION("wrong beta length") {
        REQUIRE_THROWS_AS(evaluate_tracking(panel, Eigen::VectorXd::Zero(4)), std::invalid_argument);
    }
}
