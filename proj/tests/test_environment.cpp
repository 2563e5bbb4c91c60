#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include "aqsense/environment.hpp"
#include "oracles.hpp"

using namespace aqsense;
using doctest::Approx;

namespace {

EnvironmentModel chain(std::vector<int> values, Eigen::MatrixXd P) {
    EnvironmentModel m{std::move(values), {}, std::move(P)};
    m.stationary = stationary_of(m.transition);
    return m;
}

// Stationary law as the unit-eigenvalue eigenvector of P^T.
Eigen::VectorXd eigen_stationary(const Eigen::MatrixXd& P) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(P.transpose());
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < es.eigenvalues().size(); ++i)
        if (std::abs(es.eigenvalues()(i) - 1.0) < std::abs(es.eigenvalues()(best) - 1.0)) best = i;
    Eigen::VectorXd v = es.eigenvectors().col(best).real();
    return v / v.sum();
}

Eigen::MatrixXd row(std::initializer_list<double> xs) {
    Eigen::MatrixXd m(1, Eigen::Index(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) m(0, i++) = x;
    return m;
}

}  // namespace

TEST_CASE("stationary distribution agrees with the eigenvector oracle") {
    std::mt19937_64 rng(2);
    for (int n = 1; n <= 8; ++n) {
        const auto env = oracle::random_chain(std::vector<int>(std::size_t(n), 0), rng);
        const auto pi = stationary_of(env.transition);
        CHECK((pi - eigen_stationary(env.transition)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(pi.sum() == Approx(1.0));
    }
}

TEST_CASE("sampling: absorbing and alternating chains") {
    const auto absorbing = chain({10, 20, 30}, Eigen::MatrixXd::Identity(3, 3));
    EnvironmentModel fixed = absorbing;
    fixed.stationary = Eigen::Vector3d(0, 1, 0);
    const auto mu = sample_trajectory(fixed, 50, 9);
    CHECK(mu.size() == 51);
    for (double v : mu) CHECK(v == 20);

    Eigen::MatrixXd flip(2, 2);
    flip << 0, 1, 1, 0;
    const auto alt = chain({1, 2}, flip);
    const auto path = sample_trajectory(alt, 40, 4);
    for (std::size_t t = 1; t < path.size(); ++t) CHECK(path[t] != path[t - 1]);
    CHECK_THROWS_AS(sample_trajectory(alt, 0, 1), DomainError);
}

TEST_CASE("sampling is reproducible and matches the stationary law") {
    Eigen::MatrixXd P(3, 3);
    P << 0.5, 0.3, 0.2, 0.1, 0.6, 0.3, 0.25, 0.25, 0.5;
    const auto env = chain({5, 10, 15}, P);
    CHECK(sample_trajectory(env, 1000, 77) == sample_trajectory(env, 1000, 77));
    CHECK(sample_trajectory(env, 1000, 77) != sample_trajectory(env, 1000, 78));

    const auto mu = sample_trajectory(env, 100000, 5);
    Eigen::Vector3d freq = Eigen::Vector3d::Zero();
    for (double v : mu) freq(Eigen::Index(v / 5) - 1) += 1;
    freq /= freq.sum();
    CHECK((freq - eigen_stationary(P)).cwiseAbs().sum() < 0.02);
}

TEST_CASE("kernel chain is row stochastic and prefers nearby values") {
    const auto env = kernel_chain({40, 50, 60, 70}, 6.0);
    CHECK_NOTHROW(validate(env));
    CHECK(env.transition(0, 1) > env.transition(0, 3));
    CHECK_THROWS_AS(kernel_chain({1, 2}, 0.0), DomainError);
}

TEST_CASE("nearest index snaps to the value space") {
    const auto env = kernel_chain({10, 20, 40}, 5.0);
    CHECK(env.nearest_index(-5) == 0);
    CHECK(env.nearest_index(14) == 0);
    CHECK(env.nearest_index(15) == 0);
    CHECK(env.nearest_index(16) == 1);
    CHECK(env.nearest_index(100) == 2);
}

TEST_CASE("estimate_chain counting examples") {
    auto constant = TraceSet::from_dense(Eigen::MatrixXd::Constant(2, 10, 42.0));
    auto m = estimate_chain(constant);
    CHECK(m.values == std::vector<int>{42});
    CHECK(m.transition(0, 0) == 1.0);

    m = estimate_chain(TraceSet::from_dense(row({1, 2, 1, 2, 1})));
    CHECK(m.values == std::vector<int>{1, 2});
    CHECK(m.transition(0, 1) == 1.0);
    CHECK(m.transition(1, 0) == 1.0);
    CHECK(m.stationary(0) == Approx(0.6));

    CHECK_THROWS_AS(estimate_chain(TraceSet::from_dense(row({5}))), InsufficientDataError);
    // no two consecutive slots
    TraceSet gaps{{{0, 0, 1.0}, {2, 0, 2.0}, {4, 0, 1.0}}, ""};
    CHECK_THROWS_AS(estimate_chain(gaps), InsufficientDataError);
}

TEST_CASE("estimate_chain recovers a known chain") {
    Eigen::MatrixXd P(4, 4);
    P << 0.7, 0.2, 0.1, 0.0, 0.15, 0.6, 0.2, 0.05, 0.05, 0.25, 0.6, 0.1, 0.0, 0.1, 0.3, 0.6;
    const auto env = chain({30, 60, 90, 120}, P);
    const auto mu = sample_trajectory(env, 50000, 8);
    Eigen::MatrixXd y(1, Eigen::Index(mu.size()));
    for (std::size_t t = 0; t < mu.size(); ++t) y(0, Eigen::Index(t)) = mu[t];
    const auto est = estimate_chain(TraceSet::from_dense(y));
    REQUIRE(est.values == env.values);
    CHECK((est.transition - P).cwiseAbs().maxCoeff() < 0.02);
    CHECK_NOTHROW(validate(est));
}

TEST_CASE("quantize_values") {
    Eigen::MatrixXd P(4, 4);
    P << 0.5, 0.2, 0.2, 0.1, 0.1, 0.6, 0.2, 0.1, 0.3, 0.1, 0.4, 0.2, 0.1, 0.1, 0.1, 0.7;
    const auto env = chain({10, 20, 30, 40}, P);

    const auto same = quantize_values(env, 4);
    CHECK(same.values == env.values);
    CHECK(same.transition == env.transition);

    const auto one = quantize_values(env, 1);
    CHECK(one.size() == 1);
    CHECK(one.transition(0, 0) == Approx(1.0));

    const auto two = quantize_values(env, 2);
    const auto& pi = env.stationary;
    // bins {10,20} and {30,40}; rows are stationary-weighted sums of member rows
    const double m0 = pi(0) + pi(1), m1 = pi(2) + pi(3);
    CHECK(two.stationary(0) == Approx(m0));
    CHECK(two.values[0] == std::lround((10 * pi(0) + 20 * pi(1)) / m0));
    CHECK(two.values[1] == std::lround((30 * pi(2) + 40 * pi(3)) / m1));
    const double f00 = pi(0) * (P(0, 0) + P(0, 1)) + pi(1) * (P(1, 0) + P(1, 1));
    const double f11 = pi(2) * (P(2, 2) + P(2, 3)) + pi(3) * (P(3, 2) + P(3, 3));
    CHECK(two.transition(0, 0) == Approx(f00 / m0));
    CHECK(two.transition(1, 1) == Approx(f11 / m1));
    CHECK_NOTHROW(validate(two));
    // the aggregated chain keeps the aggregated stationary law
    CHECK((stationary_of(two.transition) - two.stationary).cwiseAbs().maxCoeff() < 1e-9);

    CHECK_THROWS_AS(quantize_values(env, 0), DomainError);
    CHECK_THROWS_AS(quantize_values(env, 5), DomainError);
}

TEST_CASE("measurement variance calibration") {
    CHECK(calibrate_measurement_variance(Eigen::MatrixXd::Constant(3, 5, 50.0)) == 0.0);
    Eigen::MatrixXd y(2, 1);
    y << 90, 110;
    CHECK(calibrate_measurement_variance(y) == Approx(0.01));
    CHECK_THROWS_AS(calibrate_measurement_variance(Eigen::MatrixXd::Constant(1, 5, 50.0)), InsufficientDataError);
    CHECK_THROWS_AS(calibrate_measurement_variance(Eigen::MatrixXd::Zero(3, 5)), InsufficientDataError);

    const auto env = kernel_chain({40, 60, 80, 100, 120}, 15.0);
    const auto mu = sample_trajectory(env, 9999, 3);
    const auto est = calibrate_measurement_variance(measurement_noise_traces(mu, 10, 0.0037, 4));
    CHECK(std::abs(est - 0.0037) / 0.0037 < 0.10);
}

TEST_CASE("temporal variance calibration") {
    CHECK(calibrate_temporal_variance(Eigen::MatrixXd::Constant(2, 6, 7.0)) == 0.0);
    CHECK(calibrate_temporal_variance(row({0, 3, 0, 3})) == Approx(9.0));
    CHECK_THROWS_AS(calibrate_temporal_variance(row({4})), InsufficientDataError);
    const double est = calibrate_temporal_variance(random_walk_traces(10000, 3, 100, 10.89, 6));
    CHECK(std::abs(est - 10.89) / 10.89 < 0.10);
}

TEST_CASE("pairwise calibration") {
    const auto env = kernel_chain({40, 60, 80, 100, 120}, 15.0);
    const auto mu = sample_trajectory(env, 199, 12);
    Eigen::MatrixXd y(2, Eigen::Index(mu.size()));
    for (std::size_t t = 0; t < mu.size(); ++t) y(0, Eigen::Index(t)) = y(1, Eigen::Index(t)) = mu[t] + 3.0 * double(t % 3);
    auto pt = calibrate_pairwise(y);
    CHECK(pt.mu_pair(0, 1) == 0.0);
    CHECK(pt.sigma_pair_sq(0, 1) == 0.0);

    // y2 = y1 + 0.1 mu_t where mu_t is the cross-location mean
    for (std::size_t t = 0; t < mu.size(); ++t) {
        y(0, Eigen::Index(t)) = mu[t] * 0.95;
        y(1, Eigen::Index(t)) = mu[t] * 1.05;
    }
    pt = calibrate_pairwise(y);
    CHECK(pt.mu_pair(0, 1) == Approx(0.1).epsilon(1e-12));
    CHECK(pt.mu_pair(1, 0) == Approx(-0.1).epsilon(1e-12));
    CHECK(pt.sigma_pair_sq(0, 1) == Approx(0.0).epsilon(1e-20));

    const LocationModel lm{Eigen::Vector2d(-0.025, 0.025), Eigen::Vector2d(0.005, 0.005)};
    const auto long_mu = sample_trajectory(env, 9999, 13);
    pt = calibrate_pairwise(location_model_traces(long_mu, lm, 14));
    CHECK(std::abs(pt.mu_pair(0, 1) - 0.05) / 0.05 < 0.10);
    CHECK(std::abs(pt.sigma_pair_sq(0, 1) - 0.01) / 0.01 < 0.10);

    Eigen::MatrixXd disjoint = Eigen::MatrixXd::Constant(2, 4, std::nan(""));
    disjoint(0, 0) = disjoint(0, 1) = 50;
    disjoint(1, 2) = disjoint(1, 3) = 50;
    CHECK_THROWS_AS(calibrate_pairwise(disjoint), InsufficientDataError);
}

TEST_CASE("calibrated pair tables are exactly antisymmetric and symmetric") {
    const auto env = kernel_chain({40, 60, 80, 100}, 15.0);
    const auto mu = sample_trajectory(env, 499, 21);
    const auto y = location_model_traces(mu, random_location_model(5, 22), 23);
    const auto params = calibrate(TraceSet::from_dense(y));
    CHECK(params.mu_pair == -params.mu_pair.transpose());
    CHECK(params.sigma_pair_sq == params.sigma_pair_sq.transpose());
    CHECK(params.mu_pair.diagonal().isZero(0));
    CHECK_NOTHROW(validate(params));
}

TEST_CASE("calibration error shrinks with more data") {
    const auto env = kernel_chain({40, 60, 80, 100, 120}, 15.0);
    double err_short = 0, err_long = 0;
    for (std::uint64_t s = 0; s < 8; ++s) {
        const auto mu = sample_trajectory(env, 9999, 100 + s);
        const Trajectory head(mu.begin(), mu.begin() + 1000);
        err_short += std::abs(calibrate_measurement_variance(measurement_noise_traces(head, 4, 0.0037, 200 + s)) - 0.0037);
        err_long += std::abs(calibrate_measurement_variance(measurement_noise_traces(mu, 4, 0.0037, 300 + s)) - 0.0037);
    }
    CHECK(err_long < err_short);
}

TEST_CASE("trace set dense conversion") {
    TraceSet ts{{{0, 0, 1.0}, {1, 2, 3.0}}, "10min"};
    const auto y = ts.dense();
    CHECK(y.rows() == 3);
    CHECK(y.cols() == 2);
    CHECK(y(2, 1) == 3.0);
    CHECK(std::isnan(y(1, 0)));
    ts.readings.push_back({0, 0, 2.0});
    CHECK_THROWS_AS(ts.dense(), DomainError);
}
