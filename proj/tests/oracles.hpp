#pragma once

// Independent reference computations used by the unit and acceptance tests.
// They restate the model formulas with plain loops and never call the
// library's inference routines.

#include <cmath>
#include <cstddef>
#include <algorithm>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "aqsense/environment.hpp"
#include "aqsense/inference.hpp"
#include "aqsense/schedule.hpp"

namespace oracle {

struct Device {
    std::size_t location;
    int age;
    double recorded;  // coarse value when the device last sensed
    bool now;         // senses in the current slot
};

/// Per-location joint errors of one slot, written out from the model formulas.
inline std::vector<double> slot_errors(const std::vector<Device>& devs, double mu,
                                       const aqsense::InferenceParams& p) {
    const auto K = static_cast<std::size_t>(p.mu_pair.rows());
    std::vector<double> out(K);
    for (std::size_t k = 0; k < K; ++k) {
        bool direct = false;
        for (const auto& d : devs) direct = direct || (d.now && d.location == k);
        if (direct) {
            out[k] = std::sqrt(mu * mu * p.sigma0_sq);
            continue;
        }
        double prec = 0, wsum = 0;
        for (const auto& d : devs) {
            const double r = d.now ? mu : d.recorded;
            const int age = d.now ? 0 : d.age;
            const auto i = Eigen::Index(d.location), j = Eigen::Index(k);
            const double m = r + mu * p.mu_pair(i, j);
            const double v = r * r * p.sigma0_sq + age * p.sigma_d_sq + mu * mu * p.sigma_pair_sq(i, j);
            prec += 1.0 / v;
            wsum += m / v;
        }
        const double var = 1.0 / prec, mean = wsum * var;
        out[k] = std::sqrt(var + (mean - mu) * (mean - mu));
    }
    return out;
}

inline double sum(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return s;
}

/// J-bar of a schedule recomputed slot by slot from the formulas.
inline double evaluate(const aqsense::Schedule& s, const aqsense::Trajectory& mu, const aqsense::InferenceParams& p) {
    const int T = s.horizon();
    const auto K = s.phi.rows();
    std::vector<int> last_t(s.deployed.size(), 0);
    double total = 0;
    for (int t = 1; t <= T; ++t) {
        std::vector<Device> devs;
        for (std::size_t i = 0; i < s.deployed.size(); ++i) {
            const bool now = s.phi(Eigen::Index(s.deployed[i]), t) != 0;
            devs.push_back({s.deployed[i], t - last_t[i], mu[std::size_t(last_t[i])], now});
        }
        total += sum(slot_errors(devs, mu[std::size_t(t)], p));
        for (std::size_t i = 0; i < s.deployed.size(); ++i)
            if (s.phi(Eigen::Index(s.deployed[i]), t)) last_t[i] = t;
    }
    return total / (double(T) * double(K));
}

/// Random pair tables within the ranges seen on real deployments.
inline aqsense::InferenceParams random_params(int K, std::mt19937_64& rng, double sigma0_sq = 0.0037,
                                              double sigma_d_sq = 10.89) {
    std::uniform_real_distribution<double> mu(-0.15, 0.15), var(0.001, 0.1);
    aqsense::InferenceParams p;
    p.sigma0_sq = sigma0_sq;
    p.sigma_d_sq = sigma_d_sq;
    p.mu_pair = Eigen::MatrixXd::Zero(K, K);
    p.sigma_pair_sq = Eigen::MatrixXd::Zero(K, K);
    for (int i = 0; i < K; ++i)
        for (int j = i + 1; j < K; ++j) {
            p.mu_pair(i, j) = mu(rng);
            p.mu_pair(j, i) = -p.mu_pair(i, j);
            p.sigma_pair_sq(i, j) = p.sigma_pair_sq(j, i) = var(rng);
        }
    return p;
}

/// Random chain over the given values with strictly positive rows.
inline aqsense::EnvironmentModel random_chain(std::vector<int> values, std::mt19937_64& rng) {
    const auto n = Eigen::Index(values.size());
    std::uniform_real_distribution<double> u(0.05, 1.0);
    aqsense::EnvironmentModel env;
    env.values = std::move(values);
    env.transition.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) env.transition(i, j) = u(rng);
        env.transition.row(i) /= env.transition.row(i).sum();
    }
    // power iteration is independent of the library's least-squares solve
    Eigen::RowVectorXd pi = Eigen::RowVectorXd::Constant(n, 1.0 / double(n));
    for (int it = 0; it < 10000; ++it) pi = pi * env.transition;
    env.stationary = pi.transpose();
    return env;
}

// Plain recursive expectimax over the full action/outcome tree.
struct Expectimax {
    aqsense::PlanningConfig cfg;
    std::size_t loc;
    aqsense::EnvironmentModel env;
    aqsense::InferenceParams p;
    bool reserve;

    // voluntary sensing must keep one sensing per remaining delta_T slots
    bool may_sense(int t, int pw, int d) const {
        return pw > 0 && (!reserve || d == cfg.delta_T || (pw - 1) * cfg.delta_T > cfg.T - t - cfg.delta_T);
    }

    double slot(bool sense, int d, std::size_t r, std::size_t e) const {
        const double mu = env.values[e];
        const Device dev{loc, sense ? 0 : d, double(env.values[r]), sense};
        return -sum(slot_errors({dev}, mu, p));
    }

    double value(int t, int pw, int d, std::size_t r, std::size_t e) const {
        if (t > cfg.T) return 0;
        auto expect = [&](int np, int nd, std::size_t nr) {
            double v = 0;
            for (std::size_t x = 0; x < env.size(); ++x)
                v += env.transition(Eigen::Index(e), Eigen::Index(x)) * value(t + 1, np, nd, nr, x);
            return v;
        };
        double best = -1e300;
        if (!(pw > 0 && d == cfg.delta_T)) best = slot(false, d, r, e) + expect(pw, std::min(d + 1, cfg.delta_T), r);
        if (may_sense(t, pw, d)) best = std::max(best, slot(true, d, r, e) + expect(pw - 1, 1, e));
        return best;
    }
};

}  // namespace oracle
