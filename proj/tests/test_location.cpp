#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "aqsense/environment.hpp"
#include "aqsense/location.hpp"
#include "oracles.hpp"

using namespace aqsense;
using doctest::Approx;

namespace {

InferenceParams pairs(int K) {
    InferenceParams p;
    p.sigma0_sq = 0.0037;
    p.sigma_d_sq = 10.89;
    p.mu_pair = Eigen::MatrixXd::Zero(K, K);
    p.sigma_pair_sq = Eigen::MatrixXd::Zero(K, K);
    return p;
}

Gene bits(const std::string& s) {
    Gene g;
    for (char c : s) g.bits.push_back(c == '1');
    return g;
}

std::string str(const Gene& g) {
    std::string s;
    for (auto b : g.bits) s += b ? '1' : '0';
    return s;
}

double max_rel_distance_error(const Embedding& e, const Eigen::MatrixXd& theta) {
    double worst = 0;
    for (Eigen::Index i = 0; i < theta.rows(); ++i)
        for (Eigen::Index j = i + 1; j < theta.rows(); ++j) {
            const double d = (e.coords.row(i) - e.coords.row(j)).norm();
            worst = std::max(worst, std::abs(d - theta(i, j)) / std::max(theta(i, j), 1e-12));
        }
    return worst;
}

Eigen::MatrixXd distances(const Eigen::MatrixXd& pts) {
    Eigen::MatrixXd d(pts.rows(), pts.rows());
    for (Eigen::Index i = 0; i < pts.rows(); ++i)
        for (Eigen::Index j = 0; j < pts.rows(); ++j) d(i, j) = (pts.row(i) - pts.row(j)).norm();
    return d;
}

}  // namespace

TEST_CASE("difference matrix examples") {
    auto p = pairs(3);
    auto dm = difference_matrix(p);
    CHECK(dm.theta.isZero(0));
    CHECK(dm.delta_applied == 0.0);

    p.mu_pair(0, 1) = 0.3;
    p.mu_pair(1, 0) = -0.3;
    p.sigma_pair_sq(0, 1) = p.sigma_pair_sq(1, 0) = 0.04;
    dm = difference_matrix(p);
    // 0-1 is far while 0-2 and 2-1 are zero: violation 0.3606 repaired
    CHECK(dm.delta_applied == Approx(std::sqrt(0.13)).epsilon(1e-12));
    CHECK(dm.theta(0, 1) == Approx(2 * std::sqrt(0.13)).epsilon(1e-12));
    CHECK(dm.theta(0, 2) == Approx(std::sqrt(0.13)).epsilon(1e-12));
    CHECK(dm.theta.diagonal().isZero(0));
    CHECK(max_triangle_violation(dm.theta) <= 1e-12);
}

TEST_CASE("single pair difference without repair") {
    auto p = pairs(2);
    p.mu_pair(0, 1) = 0.3;
    p.mu_pair(1, 0) = -0.3;
    p.sigma_pair_sq(0, 1) = p.sigma_pair_sq(1, 0) = 0.04;
    const auto dm = difference_matrix(p);
    CHECK(dm.theta(0, 1) == Approx(0.3606).epsilon(1e-4));
    CHECK(dm.theta(1, 0) == dm.theta(0, 1));
    CHECK(dm.delta_applied == 0.0);
}

TEST_CASE("repaired matrices satisfy every triangle inequality") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 30; ++trial) {
        const int K = 3 + trial % 28;
        const auto dm = difference_matrix(oracle::random_params(K, rng));
        CHECK(dm.delta_applied >= 0.0);
        CHECK(dm.theta == dm.theta.transpose());
        for (int i = 0; i < K; ++i)
            for (int j = 0; j < K; ++j)
                for (int k = 0; k < K; ++k)
                    if (i != j && j != k && i != k) CHECK(dm.theta(i, j) <= dm.theta(i, k) + dm.theta(k, j) + 1e-12);
    }
}

TEST_CASE("embedding examples") {
    Eigen::MatrixXd t2(2, 2);
    t2 << 0, 3, 3, 0;
    auto e = embed(t2);
    CHECK(e.coords.rows() == 2);
    CHECK(e.coords.cols() == 1);
    CHECK(e.coords(0, 0) == 0.0);
    CHECK(e.coords(1, 0) == Approx(3));

    Eigen::MatrixXd t3(3, 3);
    t3 << 0, 3, 4, 3, 0, 5, 4, 5, 0;
    e = embed(t3);
    CHECK(e.coords.row(0).norm() == 0.0);
    CHECK(e.coords(1, 0) == Approx(3));
    CHECK(e.coords(1, 1) == Approx(0).epsilon(1e-12));
    CHECK(e.coords(2, 0) == Approx(0).scale(1));
    CHECK(e.coords(2, 1) == Approx(4));
    CHECK(e.residual < 1e-12);
}

TEST_CASE("embedding reconstructs Euclidean distance matrices") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0, 1);
    for (int trial = 0; trial < 60; ++trial) {
        const int K = 2 + trial % 7;
        const int dim = 1 + trial % (K - 1 + 1);
        Eigen::MatrixXd pts(K, std::min(dim, K - 1));
        for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = g(rng);
        const auto theta = distances(pts);
        const auto e = embed(theta);
        CHECK(max_rel_distance_error(e, theta) < 1e-6);
        CHECK(e.residual < 1e-6);
    }
}

TEST_CASE("embedding reports the residual of a non-Euclidean metric") {
    // star metric: centre at distance 1 from four leaves that are 2 apart
    Eigen::MatrixXd t = Eigen::MatrixXd::Constant(5, 5, 2.0);
    t.row(0).setOnes();
    t.col(0).setOnes();
    t.diagonal().setZero();
    CHECK(max_triangle_violation(t) <= 0);
    const auto e = embed(t);
    CHECK(e.residual > 0.1);
    CHECK(e.coords.allFinite());
}

TEST_CASE("k-means edge cases") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> g(0, 1);
    Eigen::MatrixXd pts(7, 3);
    for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = g(rng);

    auto c = kmeans_cluster(pts, 7, 1);
    CHECK(c.clusters.size() == 7);
    for (const auto& cl : c.clusters) CHECK(cl.size() == 1);

    c = kmeans_cluster(pts, 1, 1);
    REQUIRE(c.clusters.size() == 1);
    CHECK(c.clusters[0] == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
    CHECK_THROWS_AS(kmeans_cluster(pts, 0, 1), DomainError);
    CHECK_THROWS_AS(kmeans_cluster(pts, 8, 1), DomainError);
}

TEST_CASE("k-means separates well-separated groups") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g(0, 0.1);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        Eigen::MatrixXd pts(10, 2);
        for (int i = 0; i < 10; ++i) {
            const double cx = i % 2 ? 10.0 : 0.0;
            pts(i, 0) = cx + g(rng);
            pts(i, 1) = g(rng);
        }
        const auto c = kmeans_cluster(pts, 2, seed);
        for (int i = 0; i < 10; ++i) CHECK(c.assignment[std::size_t(i)] == c.assignment[std::size_t(i % 2)]);
        CHECK(c.assignment[0] != c.assignment[1]);
    }
}

TEST_CASE("k-means objective never increases") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(0, 1);
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        Eigen::MatrixXd pts(30, 4);
        for (Eigen::Index i = 0; i < pts.size(); ++i) pts.data()[i] = g(rng);
        const auto c = kmeans_cluster(pts, 2 + int(seed % 6), seed);
        for (std::size_t i = 1; i < c.wcss.size(); ++i) CHECK(c.wcss[i] <= c.wcss[i - 1] + 1e-12);
        CHECK(c.wcss.size() <= 100);
        std::set<std::size_t> all;
        for (const auto& cl : c.clusters) {
            CHECK_FALSE(cl.empty());
            all.insert(cl.begin(), cl.end());
        }
        CHECK(all.size() == 30);
    }
}

TEST_CASE("initial pool draws one location per cluster") {
    Clustering c;
    c.clusters = {{0, 3}, {1, 4, 5}, {2}};
    const auto pool = initial_pool(c, 6, 50, 9);
    CHECK(pool.size() == 50);
    for (const auto& g : pool) {
        CHECK(g.popcount() == 3);
        CHECK(g.bits[2] == 1);
        CHECK(g.bits[0] + g.bits[3] == 1);
        CHECK(g.bits[1] + g.bits[4] + g.bits[5] == 1);
    }
    CHECK(initial_pool(c, 6, 50, 9) == pool);

    Clustering singletons;
    singletons.clusters = {{0}, {1}, {2}};
    for (const auto& g : initial_pool(singletons, 3, 5, 1)) CHECK(str(g) == "111");

    for (const auto& g : random_pool(8, 3, 20, 4)) CHECK(g.popcount() == 3);
}

TEST_CASE("mutation") {
    Rng rng(1);
    GAConfig cfg;
    cfg.M = 4;
    const auto g = bits("10110010");
    cfg.p_m = 0;
    for (const auto& m : mutate(g, cfg, rng)) CHECK(m == g);
    cfg.p_m = 1;
    for (const auto& m : mutate(g, cfg, rng)) CHECK(str(m) == "01001101");
    CHECK(mutate(g, cfg, rng).size() == 4);

    cfg.p_m = 0.1;
    cfg.M = 1;
    const Gene zeros{std::vector<std::uint8_t>(100, 0), std::nullopt};
    long flips = 0;
    for (int i = 0; i < 1000; ++i) flips += mutate(zeros, cfg, rng)[0].popcount();
    CHECK(std::abs(double(flips) / 1e5 - 0.1) < 0.01);
}

TEST_CASE("recombination") {
    auto [a, b] = recombine_at(bits("1100"), bits("0011"), 2);
    CHECK(str(a) == "1111");
    CHECK(str(b) == "0000");

    Rng rng(2);
    const auto g = bits("101101");
    for (int i = 0; i < 20; ++i) {
        auto [x, y] = recombine(g, g, rng);
        CHECK(x == g);
        CHECK(y == g);
    }
    const auto p = bits("1100101"), q = bits("0110011");
    for (int i = 0; i < 50; ++i) {
        auto [x, y] = recombine(p, q, rng);
        for (std::size_t k = 0; k < p.bits.size(); ++k) CHECK(x.bits[k] + y.bits[k] == p.bits[k] + q.bits[k]);
    }
}

TEST_CASE("selection") {
    Rng rng(3);
    GAConfig cfg{2, 1, 1, 1, 0.1, 1, 1};
    Gene a = bits("1100"), b = bits("0110");
    a.fitness = 5;
    b.fitness = 10;
    GAConfig elite{1, 1, 0, 1, 0.1, 1, 1};
    auto out = select({b, a}, elite, 2, rng);
    REQUIRE(out.size() == 1);
    CHECK(out[0] == a);

    Gene over = bits("1110"), empty = bits("0000");
    over.fitness = 1;
    empty.fitness = 0;
    Gene dup = a;
    out = select({a, dup, over, empty, b}, cfg, 2, rng);
    CHECK(out.size() == 2);
    for (const auto& g : out) {
        CHECK(g.popcount() <= 2);
        CHECK(g.popcount() >= 1);
    }
    CHECK(out[0] == a);
    CHECK_THROWS_AS(select({over, empty}, cfg, 2, rng), DegenerateInputError);

    // equal fitness: uniform fallback still fills the pool without duplicates
    GenePool flat;
    for (int i = 0; i < 8; ++i) {
        Gene g{std::vector<std::uint8_t>(8, 0), 3.0};
        g.bits[std::size_t(i)] = 1;
        flat.push_back(g);
    }
    GAConfig six{6, 2, 4, 1, 0.1, 1, 1};
    std::vector<int> hits(8, 0);
    for (int rep = 0; rep < 2000; ++rep) {
        out = select(flat, six, 2, rng);
        CHECK(out.size() == 6);
        std::set<std::vector<std::uint8_t>> uniq;
        for (const auto& g : out) uniq.insert(g.bits);
        CHECK(uniq.size() == 6);
    }
}

TEST_CASE("GA configuration validation") {
    CHECK_NOTHROW(validate(GAConfig{}));
    CHECK_THROWS_AS(validate(GAConfig{40, 4, 30, 3, 0.1, 25, 6}), ValidationError);
    CHECK_THROWS_AS(validate(GAConfig{40, 4, 36, 3, 1.5, 25, 6}), ValidationError);
}

TEST_CASE("evolve") {
    // fitness = distance of the gene from a target set
    const auto target = bits("00101001");
    auto score = [&](const Gene& g) {
        double d = 0;
        for (std::size_t k = 0; k < g.bits.size(); ++k) d += g.bits[k] != target.bits[k];
        return d + 1;
    };
    const auto pool = random_pool(8, 3, 20, 5);
    GAConfig cfg{20, 2, 18, 3, 0.1, 0, 6};
    auto r = evolve(pool, cfg, 3, score, 1);
    double best0 = 1e9;
    for (const auto& g : pool) best0 = std::min(best0, score(g));
    CHECK(r.rounds == 0);
    CHECK(r.best.fitness.value() == best0);
    CHECK(r.history == std::vector<double>{best0});

    cfg.W = 30;
    r = evolve(pool, cfg, 3, score, 1);
    for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i] <= r.history[i - 1]);
    CHECK(r.best.fitness.value() == r.history.back());
    CHECK(str(r.best) == "00101001");
    CHECK(r.rounds <= 30);
    for (const auto& g : r.pool) CHECK(g.popcount() <= 3);
}

TEST_CASE("schedule evaluator") {
    const PlanningConfig cfg{4, 2, 10, 4, 4};
    const PhiMatrix power = uniform_schedule(cfg, {0, 1}).phi.topRows(2);
    const auto env = kernel_chain({40, 60, 80}, 12.0);
    std::mt19937_64 rng(4);
    const auto p = oracle::random_params(4, rng);
    const auto mu = sample_trajectory(env, cfg.T, 2);
    const auto eval = make_schedule_evaluator(power, mu, p);
    // gene 0101: location 1 follows row 0, location 3 follows row 1
    auto s = Schedule::initial(4, 10, {1, 3});
    s.phi.row(1) = power.row(0);
    s.phi.row(3) = power.row(1);
    CHECK(eval(bits("0101")) == Approx(oracle::evaluate(s, mu, p)).epsilon(1e-12));
    auto one = Schedule::initial(4, 10, {2});
    one.phi.row(2) = power.row(0);
    CHECK(eval(bits("0010")) == Approx(oracle::evaluate(one, mu, p)).epsilon(1e-12));
    CHECK_THROWS_AS(eval(bits("0111")), ValidationError);
}

TEST_CASE("GA lands near the exhaustive optimum") {
    const int K = 8, L = 3;
    const PlanningConfig cfg{K, L, 60, 12, 8};
    const auto env = kernel_chain({40, 55, 70, 85, 100}, 12.0);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto lm = random_location_model(K, 100 + seed);
        const auto p = lm.implied_params(0.0037, 10.89);
        const auto mu = sample_trajectory(env, cfg.T, 200 + seed);
        const auto eval = make_schedule_evaluator(uniform_schedule(cfg, {0, 1, 2}).phi.topRows(L), mu, p);
        double best = 1e300;
        for (unsigned m = 1; m < (1u << K); ++m) {
            if (__builtin_popcount(m) > L) continue;
            Gene g{std::vector<std::uint8_t>(K, 0), std::nullopt};
            for (int k = 0; k < K; ++k) g.bits[std::size_t(k)] = (m >> k) & 1u;
            best = std::min(best, eval(g));
        }
        const GAConfig ga{20, 2, 18, 3, 0.1, 25, 6};
        const auto r = select_locations(p, L, ga, eval, seed);
        CHECK(r.evolution.best.fitness.value() <= 1.05 * best);
        CHECK(r.clustering.clusters.size() == std::size_t(L));
    }
}
