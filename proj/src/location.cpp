#include "aqsense/location.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <string>

namespace aqsense {

double max_triangle_violation(const Eigen::MatrixXd& theta) {
    const auto K = theta.rows();
    double worst = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index k = 0; k < K; ++k) {
            if (k == i) continue;
            for (Eigen::Index j = 0; j < K; ++j) {
                if (j == i || j == k) continue;
                worst = std::max(worst, theta(i, j) - theta(i, k) - theta(k, j));
            }
        }
    return worst;
}

DifferenceMatrix difference_matrix(const InferenceParams& params) {
    validate(params);
    DifferenceMatrix out;
    out.theta = (params.mu_pair.array().square() + params.sigma_pair_sq.array()).sqrt().matrix();
    out.theta.diagonal().setZero();
    const double delta = max_triangle_violation(out.theta);
    if (delta > 0) {
        out.theta.array() += delta;
        out.theta.diagonal().setZero();
        out.delta_applied = delta;
    }
    return out;
}

Embedding embed(const DifferenceMatrix& theta) { return embed(theta.theta); }

Embedding embed(const Eigen::MatrixXd& theta) {
    if (theta.rows() != theta.cols()) throw DomainError("embed: difference matrix must be square");
    const auto K = theta.rows();
    const Eigen::Index D = std::max<Eigen::Index>(K - 1, 0);
    Embedding out;
    out.coords = Eigen::MatrixXd::Zero(K, D);
    for (Eigen::Index k = 1; k < K; ++k) {
        const double r0 = theta(k, 0) * theta(k, 0);
        Eigen::VectorXd y = Eigen::VectorXd::Zero(k - 1);
        if (k > 1) {
            // x_j . x_k = (|x_k|^2 + |x_j|^2 - theta_kj^2) / 2 with |x_k|^2 = theta_k0^2
            const Eigen::MatrixXd A = out.coords.block(1, 0, k - 1, k - 1);
            Eigen::VectorXd b(k - 1);
            for (Eigen::Index j = 1; j < k; ++j)
                b(j - 1) = 0.5 * (r0 + out.coords.row(j).squaredNorm() - theta(k, j) * theta(k, j));
            y = A.completeOrthogonalDecomposition().solve(b);
        }
        out.coords.row(k).head(k - 1) = y.transpose();
        out.coords(k, k - 1) = std::sqrt(std::max(0.0, r0 - y.squaredNorm()));
    }
    for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index j = i + 1; j < K; ++j)
            out.residual = std::max(out.residual,
                                    std::abs((out.coords.row(i) - out.coords.row(j)).norm() - theta(i, j)));
    return out;
}

Clustering kmeans_cluster(const Embedding& emb, int L, std::uint64_t seed) {
    return kmeans_cluster(emb.coords, L, seed);
}

Clustering kmeans_cluster(const Eigen::MatrixXd& points, int L, std::uint64_t seed) {
    const auto n = points.rows();
    if (L < 1 || L > n) throw DomainError("kmeans: need 1 <= L <= K");
    Rng rng(seed);

    Eigen::MatrixXd centers(L, points.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    const Eigen::Index start = first(rng);
    centers.row(0) = points.row(start);
    Eigen::VectorXd nearest = (points.rowwise() - centers.row(0)).rowwise().squaredNorm();
    std::vector<char> chosen(static_cast<std::size_t>(n), 0);
    chosen[std::size_t(start)] = 1;
    for (int c = 1; c < L; ++c) {
        Eigen::Index far = -1;
        for (Eigen::Index i = 0; i < n; ++i)
            if (!chosen[std::size_t(i)] && (far < 0 || nearest(i) > nearest(far))) far = i;
        chosen[std::size_t(far)] = 1;
        centers.row(c) = points.row(far);
        nearest = nearest.cwiseMin((points.rowwise() - centers.row(c)).rowwise().squaredNorm());
    }

    Clustering out;
    out.assignment.assign(std::size_t(n), -1);
    auto dist2 = [&](Eigen::Index i, int c) { return (points.row(i) - centers.row(c)).squaredNorm(); };
    for (int iter = 0; iter < 100; ++iter) {
        std::vector<int> next(static_cast<std::size_t>(n));
        std::vector<int> count(std::size_t(L), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            int arg = 0;
            for (int c = 1; c < L; ++c)
                if (dist2(i, c) < dist2(i, arg)) arg = c;
            next[std::size_t(i)] = arg;
            ++count[std::size_t(arg)];
        }
        for (int c = 0; c < L; ++c) {
            if (count[std::size_t(c)] > 0) continue;
            Eigen::Index far = -1;
            double worst = -1;
            for (Eigen::Index i = 0; i < n; ++i) {
                const int home = next[std::size_t(i)];
                if (count[std::size_t(home)] < 2) continue;
                const double d = dist2(i, home);
                if (d > worst) {
                    worst = d;
                    far = i;
                }
            }
            --count[std::size_t(next[std::size_t(far)])];
            next[std::size_t(far)] = c;
            count[std::size_t(c)] = 1;
        }
        const bool stable = next == out.assignment;
        out.assignment = std::move(next);
        centers.setZero();
        for (Eigen::Index i = 0; i < n; ++i) centers.row(out.assignment[std::size_t(i)]) += points.row(i);
        for (int c = 0; c < L; ++c) centers.row(c) /= double(count[std::size_t(c)]);
        double wcss = 0;
        for (Eigen::Index i = 0; i < n; ++i) wcss += dist2(i, out.assignment[std::size_t(i)]);
        out.wcss.push_back(wcss);
        if (stable) break;
    }
    out.clusters.assign(std::size_t(L), {});
    for (Eigen::Index i = 0; i < n; ++i) out.clusters[std::size_t(out.assignment[std::size_t(i)])].push_back(std::size_t(i));
    return out;
}

int Gene::popcount() const { return static_cast<int>(std::count(bits.begin(), bits.end(), std::uint8_t{1})); }

std::vector<std::size_t> Gene::locations() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < bits.size(); ++k)
        if (bits[k]) out.push_back(k);
    return out;
}

Gene Gene::from_locations(int K, const std::vector<std::size_t>& locations) {
    Gene g{std::vector<std::uint8_t>(std::size_t(K), 0), std::nullopt};
    for (auto k : locations) {
        if (k >= g.bits.size()) throw DomainError("gene: location out of range");
        g.bits[k] = 1;
    }
    return g;
}

void validate(const GAConfig& cfg) {
    auto fail = [](const std::string& what) { throw ValidationError("GA config: " + what); };
    if (cfg.H < 1) fail("H >= 1");
    if (cfg.H1 < 0 || cfg.H2 < 0) fail("H1, H2 >= 0");
    if (cfg.H1 + cfg.H2 != cfg.H) fail("H1 + H2 = H");
    if (cfg.M < 0) fail("M >= 0");
    if (!(cfg.p_m >= 0 && cfg.p_m <= 1)) fail("0 <= p_m <= 1");
    if (cfg.W < 0) fail("W >= 0");
    if (cfg.stall < 1) fail("stall >= 1");
}

GenePool initial_pool(const Clustering& clusters, int K, int C, std::uint64_t seed) {
    if (clusters.clusters.empty()) throw DomainError("initial_pool: no clusters");
    for (const auto& c : clusters.clusters)
        if (c.empty()) throw DomainError("initial_pool: empty cluster");
    if (C < 0) throw DomainError("initial_pool: C must be nonnegative");
    Rng rng(seed);
    GenePool pool;
    pool.reserve(std::size_t(C));
    for (int i = 0; i < C; ++i) {
        std::vector<std::size_t> pick;
        for (const auto& c : clusters.clusters) {
            std::uniform_int_distribution<std::size_t> u(0, c.size() - 1);
            pick.push_back(c[u(rng)]);
        }
        pool.push_back(Gene::from_locations(K, pick));
    }
    return pool;
}

GenePool random_pool(int K, int L, int C, std::uint64_t seed) {
    if (L < 1 || L > K) throw DomainError("random_pool: need 1 <= L <= K");
    Rng rng(seed);
    std::vector<std::size_t> ids(static_cast<std::size_t>(K));
    std::iota(ids.begin(), ids.end(), 0);
    GenePool pool;
    for (int i = 0; i < C; ++i) {
        std::shuffle(ids.begin(), ids.end(), rng);
        pool.push_back(Gene::from_locations(K, std::vector<std::size_t>(ids.begin(), ids.begin() + L)));
    }
    return pool;
}

std::vector<Gene> mutate(const Gene& g, const GAConfig& cfg, Rng& rng) {
    std::bernoulli_distribution flip(cfg.p_m);
    std::vector<Gene> out(std::size_t(cfg.M), Gene{g.bits, std::nullopt});
    for (auto& child : out)
        for (auto& b : child.bits)
            if (flip(rng)) b ^= 1u;
    return out;
}

std::pair<Gene, Gene> recombine_at(const Gene& g1, const Gene& g2, std::size_t pos) {
    if (g1.bits.size() != g2.bits.size()) throw DomainError("recombine: genes differ in length");
    if (pos > g1.bits.size()) throw DomainError("recombine: position out of range");
    Gene a{g1.bits, std::nullopt}, b{g2.bits, std::nullopt};
    std::swap_ranges(a.bits.begin() + std::ptrdiff_t(pos), a.bits.end(), b.bits.begin() + std::ptrdiff_t(pos));
    return {std::move(a), std::move(b)};
}

std::pair<Gene, Gene> recombine(const Gene& g1, const Gene& g2, Rng& rng) {
    const auto K = g1.bits.size();
    if (K < 2) return recombine_at(g1, g2, K);
    std::uniform_int_distribution<std::size_t> u(1, K - 1);
    return recombine_at(g1, g2, u(rng));
}

namespace {

bool fitter(const Gene& a, const Gene& b) {
    if (*a.fitness != *b.fitness) return *a.fitness < *b.fitness;
    return a.bits < b.bits;
}

}  // namespace

GenePool select(const GenePool& pool, const GAConfig& cfg, int L, Rng& rng) {
    GenePool cand;
    for (const auto& g : pool) {
        if (!g.fitness) throw DomainError("select: every gene needs a fitness");
        const int pc = g.popcount();
        if (pc == 0 || pc > L) continue;
        cand.push_back(g);
    }
    std::sort(cand.begin(), cand.end(), fitter);
    cand.erase(std::unique(cand.begin(), cand.end()), cand.end());
    if (cand.empty()) throw DegenerateInputError("select: no admissible gene left in the pool");

    const auto keep = std::min<std::size_t>(std::size_t(cfg.H1), cand.size());
    GenePool out(cand.begin(), cand.begin() + std::ptrdiff_t(keep));
    GenePool rest(cand.begin() + std::ptrdiff_t(keep), cand.end());
    const double worst = rest.empty() ? 0.0 : *rest.back().fitness;
    std::vector<double> w(rest.size());
    for (std::size_t i = 0; i < rest.size(); ++i) w[i] = worst - *rest[i].fitness;
    std::vector<char> taken(rest.size(), 0);
    const auto draws = std::min<std::size_t>(std::size_t(cfg.H2), rest.size());
    for (std::size_t n = 0; n < draws; ++n) {
        double total = 0;
        for (std::size_t i = 0; i < rest.size(); ++i)
            if (!taken[i]) total += w[i];
        std::size_t pick = rest.size();
        if (total > 0) {
            double u = std::uniform_real_distribution<double>(0.0, total)(rng);
            for (std::size_t i = 0; i < rest.size(); ++i) {
                if (taken[i] || w[i] <= 0) continue;
                pick = i;
                if (u < w[i]) break;
                u -= w[i];
            }
        } else {
            std::vector<std::size_t> open;
            for (std::size_t i = 0; i < rest.size(); ++i)
                if (!taken[i]) open.push_back(i);
            pick = open[std::uniform_int_distribution<std::size_t>(0, open.size() - 1)(rng)];
        }
        taken[pick] = 1;
        out.push_back(rest[pick]);
    }
    return out;
}

EvolveResult evolve(const GenePool& initial, const GAConfig& cfg, int L, const GeneEvaluator& evaluator,
                    std::uint64_t seed) {
    validate(cfg);
    if (initial.empty()) throw DomainError("evolve: empty initial pool");
    Rng rng(seed);
    std::map<std::vector<std::uint8_t>, double> cache;
    auto score = [&](GenePool& pool) {
        for (auto& g : pool) {
            if (g.fitness) continue;
            if (g.popcount() == 0 || g.popcount() > L) {
                g.fitness = std::numeric_limits<double>::infinity();
                continue;
            }
            auto it = cache.find(g.bits);
            if (it == cache.end()) it = cache.emplace(g.bits, evaluator(g)).first;
            g.fitness = it->second;
        }
    };

    EvolveResult out;
    GenePool pool = initial;
    for (auto& g : pool) g.fitness.reset();
    score(pool);
    pool = select(pool, cfg, L, rng);
    out.best = *std::min_element(pool.begin(), pool.end(), fitter);
    out.history.push_back(*out.best.fitness);

    int stall = 0;
    while (out.rounds < cfg.W && stall < cfg.stall) {
        GenePool next = pool;
        for (const auto& g : pool)
            for (auto& m : mutate(g, cfg, rng)) next.push_back(std::move(m));
        std::vector<std::size_t> order(pool.size());
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i + 1 < order.size(); i += 2) {
            auto [a, b] = recombine(pool[order[i]], pool[order[i + 1]], rng);
            next.push_back(std::move(a));
            next.push_back(std::move(b));
        }
        score(next);
        pool = select(next, cfg, L, rng);
        ++out.rounds;
        const auto& lead = *std::min_element(pool.begin(), pool.end(), fitter);
        if (*lead.fitness < *out.best.fitness) {
            out.best = lead;
            stall = 0;
        } else {
            ++stall;
        }
        out.history.push_back(*out.best.fitness);
    }
    out.pool = std::move(pool);
    return out;
}

GeneEvaluator make_schedule_evaluator(PhiMatrix power, Trajectory mu, InferenceParams params) {
    if (power.cols() < 1 || static_cast<std::size_t>(power.cols()) != mu.size())
        throw DomainError("schedule evaluator: power control must have T + 1 columns matching the trajectory");
    validate(params);
    return [power = std::move(power), mu = std::move(mu), params = std::move(params)](const Gene& g) {
        if (g.bits.size() != static_cast<std::size_t>(params.locations()))
            throw DomainError("schedule evaluator: gene length differs from K");
        const auto locs = g.locations();
        if (locs.size() > static_cast<std::size_t>(power.rows()))
            throw ValidationError("schedule evaluator: gene selects more locations than power-control rows");
        Schedule s = Schedule::initial(int(params.locations()), int(power.cols()) - 1, locs);
        for (std::size_t i = 0; i < locs.size(); ++i) {
            s.phi.row(Eigen::Index(locs[i])) = power.row(Eigen::Index(i));
            s.phi(Eigen::Index(locs[i]), 0) = 1;
        }
        return evaluate_schedule(s, mu, params).J_bar;
    };
}

SelectionResult select_locations(const InferenceParams& params, int L, const GAConfig& cfg,
                                 const GeneEvaluator& evaluator, std::uint64_t seed) {
    validate(cfg);
    const int K = int(params.locations());
    if (L < 1 || L > K) throw ValidationError("select_locations: need 1 <= L <= K");
    SelectionResult out;
    out.difference = difference_matrix(params);
    out.embedding = embed(out.difference);
    Rng fan(seed);
    const auto kmeans_seed = fan(), pool_seed = fan(), ga_seed = fan();
    out.clustering = kmeans_cluster(out.embedding, L, kmeans_seed);
    out.evolution = evolve(initial_pool(out.clustering, K, cfg.H, pool_seed), cfg, L, evaluator, ga_seed);
    return out;
}

}  // namespace aqsense
