#include "aqsense/environment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace aqsense {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

template <typename Row>
std::size_t draw(const Row& probs, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double u = unit(rng);
    double acc = 0.0;
    const auto n = static_cast<std::size_t>(probs.size());
    for (std::size_t i = 0; i < n; ++i) {
        acc += probs(static_cast<Eigen::Index>(i));
        if (u < acc) return i;
    }
    // u landed in the rounding slack above the last cumulative sum
    for (std::size_t i = n; i-- > 0;)
        if (probs(static_cast<Eigen::Index>(i)) > 0) return i;
    return n - 1;
}

}  // namespace

std::size_t EnvironmentModel::nearest_index(double v) const {
    if (values.empty()) throw DomainError("environment model has an empty value space");
    auto it = std::lower_bound(values.begin(), values.end(), v,
                               [](int a, double b) { return static_cast<double>(a) < b; });
    if (it == values.begin()) return 0;
    if (it == values.end()) return values.size() - 1;
    const auto hi = static_cast<std::size_t>(it - values.begin());
    return (v - values[hi - 1] <= *it - v) ? hi - 1 : hi;
}

void validate(const EnvironmentModel& m) {
    const auto n = static_cast<Eigen::Index>(m.values.size());
    if (n == 0) throw DomainError("environment model: empty value space");
    if (m.stationary.size() != n || m.transition.rows() != n || m.transition.cols() != n)
        throw DomainError("environment model: shape mismatch between values, stationary and transition");
    for (Eigen::Index i = 1; i < n; ++i)
        if (m.values[i] <= m.values[i - 1]) throw DomainError("environment model: values must be strictly increasing");
    if ((m.stationary.array() < 0).any() || (m.stationary.array() > 1).any())
        throw DomainError("environment model: stationary probabilities outside [0,1]");
    if (std::abs(m.stationary.sum() - 1.0) > 1e-9) throw DomainError("environment model: stationary must sum to 1");
    if ((m.transition.array() < 0).any() || (m.transition.array() > 1).any())
        throw DomainError("environment model: transition probabilities outside [0,1]");
    for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(m.transition.row(i).sum() - 1.0) > 1e-9)
            throw DomainError("environment model: transition row " + std::to_string(i) + " does not sum to 1");
}

Eigen::VectorXd stationary_of(const Eigen::MatrixXd& P) {
    const auto n = P.rows();
    Eigen::MatrixXd A(n + 1, n);
    A.topRows(n) = P.transpose() - Eigen::MatrixXd::Identity(n, n);
    A.row(n).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
    b(n) = 1.0;
    Eigen::VectorXd pi = A.colPivHouseholderQr().solve(b);
    pi = pi.cwiseMax(0.0);
    return pi / pi.sum();
}

EnvironmentModel kernel_chain(std::vector<int> values, double bandwidth) {
    if (values.empty() || !(bandwidth > 0)) throw DomainError("kernel_chain: need values and a positive bandwidth");
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    const auto n = static_cast<Eigen::Index>(values.size());
    Eigen::MatrixXd P(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double d = values[j] - values[i];
            P(i, j) = std::exp(-d * d / (2 * bandwidth * bandwidth));
        }
        P.row(i) /= P.row(i).sum();
    }
    EnvironmentModel m{std::move(values), {}, P};
    m.stationary = stationary_of(P);
    return m;
}

std::vector<std::size_t> sample_state_path(const EnvironmentModel& model, int T, Rng& rng) {
    if (T < 1) throw DomainError("sample_trajectory: T must be >= 1");
    std::vector<std::size_t> path(static_cast<std::size_t>(T) + 1);
    path[0] = draw(model.stationary, rng);
    for (std::size_t t = 1; t < path.size(); ++t)
        path[t] = draw(model.transition.row(static_cast<Eigen::Index>(path[t - 1])), rng);
    return path;
}

Trajectory sample_trajectory(const EnvironmentModel& model, int T, std::uint64_t seed) {
    Rng rng(seed);
    const auto path = sample_state_path(model, T, rng);
    Trajectory mu(path.size());
    std::transform(path.begin(), path.end(), mu.begin(), [&](std::size_t i) { return double(model.values[i]); });
    return mu;
}

Eigen::MatrixXd TraceSet::dense() const {
    int k = 0, t = 0;
    for (const auto& r : readings) {
        if (r.t < 0 || r.location < 0) throw DomainError("trace set: negative slot or location id");
        k = std::max(k, r.location + 1);
        t = std::max(t, r.t + 1);
    }
    Eigen::MatrixXd y = Eigen::MatrixXd::Constant(k, t, kNaN);
    for (const auto& r : readings) {
        if (!std::isnan(y(r.location, r.t)))
            throw DomainError("trace set: duplicate reading at t=" + std::to_string(r.t) +
                              " location=" + std::to_string(r.location));
        y(r.location, r.t) = r.value;
    }
    return y;
}

TraceSet TraceSet::from_dense(const Eigen::MatrixXd& y) {
    TraceSet ts;
    for (Eigen::Index t = 0; t < y.cols(); ++t)
        for (Eigen::Index k = 0; k < y.rows(); ++k)
            if (!std::isnan(y(k, t))) ts.readings.push_back({int(t), int(k), y(k, t)});
    return ts;
}

Eigen::VectorXd slot_means(const Eigen::MatrixXd& y) {
    Eigen::VectorXd mu(y.cols());
    for (Eigen::Index t = 0; t < y.cols(); ++t) {
        double s = 0;
        int n = 0;
        for (Eigen::Index k = 0; k < y.rows(); ++k)
            if (!std::isnan(y(k, t))) {
                s += y(k, t);
                ++n;
            }
        mu(t) = n ? s / n : kNaN;
    }
    return mu;
}

EnvironmentModel estimate_chain(const TraceSet& traces) {
    const Eigen::MatrixXd y = traces.dense();
    const Eigen::VectorXd mu = slot_means(y);

    bool consecutive = false;
    for (Eigen::Index t = 0; t + 1 < mu.size(); ++t)
        if (!std::isnan(mu(t)) && !std::isnan(mu(t + 1))) consecutive = true;
    if (!consecutive) throw InsufficientDataError("estimate_chain: need at least two consecutive slots");

    std::vector<long> level(static_cast<std::size_t>(mu.size()), 0);
    std::set<long> seen;
    for (Eigen::Index t = 0; t < mu.size(); ++t)
        if (!std::isnan(mu(t))) {
            level[t] = std::lround(mu(t));
            seen.insert(level[t]);
        }

    EnvironmentModel m;
    std::map<long, Eigen::Index> index;
    for (long v : seen) {
        index[v] = static_cast<Eigen::Index>(m.values.size());
        m.values.push_back(static_cast<int>(v));
    }
    const auto n = static_cast<Eigen::Index>(m.values.size());
    m.stationary = Eigen::VectorXd::Zero(n);
    m.transition = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index t = 0; t < mu.size(); ++t) {
        if (std::isnan(mu(t))) continue;
        m.stationary(index[level[t]]) += 1;
        if (t + 1 < mu.size() && !std::isnan(mu(t + 1))) m.transition(index[level[t]], index[level[t + 1]]) += 1;
    }
    m.stationary /= m.stationary.sum();
    for (Eigen::Index i = 0; i < n; ++i) {
        const double row = m.transition.row(i).sum();
        if (row > 0)
            m.transition.row(i) /= row;
        else
            m.transition(i, i) = 1.0;  // never left this level: absorbing
    }
    return m;
}

EnvironmentModel quantize_values(const EnvironmentModel& model, int n_bins) {
    const int n = static_cast<int>(model.size());
    if (n_bins < 1 || n_bins > n) throw DomainError("quantize_values: n_bins must be in [1, |Y|]");
    if (n_bins == n) return model;

    std::vector<int> bin_of(n);
    for (int b = 0; b < n_bins; ++b)
        for (int i = b * n / n_bins; i < (b + 1) * n / n_bins; ++i) bin_of[i] = b;

    EnvironmentModel q;
    q.values.assign(n_bins, 0);
    q.stationary = Eigen::VectorXd::Zero(n_bins);
    Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(n_bins, n_bins);
    Eigen::MatrixXd plain = Eigen::MatrixXd::Zero(n_bins, n_bins);
    std::vector<double> weighted(n_bins, 0.0), unweighted(n_bins, 0.0);
    std::vector<int> count(n_bins, 0);
    for (int i = 0; i < n; ++i) {
        const int b = bin_of[i];
        const double pi = model.stationary(i);
        q.stationary(b) += pi;
        weighted[b] += pi * model.values[i];
        unweighted[b] += model.values[i];
        ++count[b];
        for (int j = 0; j < n; ++j) {
            flow(b, bin_of[j]) += pi * model.transition(i, j);
            plain(b, bin_of[j]) += model.transition(i, j);
        }
    }
    q.transition.resize(n_bins, n_bins);
    for (int b = 0; b < n_bins; ++b) {
        const double mass = q.stationary(b);
        q.values[b] = static_cast<int>(std::lround(mass > 0 ? weighted[b] / mass : unweighted[b] / count[b]));
        const auto& row = mass > 0 ? flow.row(b) : plain.row(b);
        q.transition.row(b) = row / row.sum();
    }
    return q;
}

double calibrate_measurement_variance(const Eigen::MatrixXd& y, double min_mu) {
    const Eigen::VectorXd mu = slot_means(y);
    double total = 0;
    int used = 0;
    for (Eigen::Index t = 0; t < y.cols(); ++t) {
        if (std::isnan(mu(t)) || !(mu(t) > min_mu)) continue;
        double s = 0;
        int n = 0;
        for (Eigen::Index k = 0; k < y.rows(); ++k)
            if (!std::isnan(y(k, t))) {
                const double r = (y(k, t) - mu(t)) / mu(t);
                s += r * r;
                ++n;
            }
        if (n < 2) continue;
        total += s / n;
        ++used;
    }
    if (used == 0) throw InsufficientDataError("calibrate_measurement_variance: no slot with >= 2 locations and mu_t above threshold");
    return total / used;
}

double calibrate_measurement_variance(const TraceSet& traces, double min_mu) {
    return calibrate_measurement_variance(traces.dense(), min_mu);
}

double calibrate_temporal_variance(const Eigen::MatrixXd& y) {
    double total = 0;
    int used = 0;
    for (Eigen::Index t = 0; t + 1 < y.cols(); ++t) {
        double s = 0;
        int n = 0;
        for (Eigen::Index k = 0; k < y.rows(); ++k)
            if (!std::isnan(y(k, t)) && !std::isnan(y(k, t + 1))) {
                const double d = y(k, t + 1) - y(k, t);
                s += d * d;
                ++n;
            }
        if (n == 0) continue;
        total += s / n;
        ++used;
    }
    if (used == 0) throw InsufficientDataError("calibrate_temporal_variance: need two consecutive slots at one location");
    return total / used;
}

double calibrate_temporal_variance(const TraceSet& traces) { return calibrate_temporal_variance(traces.dense()); }

PairTables calibrate_pairwise(const Eigen::MatrixXd& y, double min_mu) {
    const Eigen::VectorXd mu = slot_means(y);
    const auto K = y.rows();
    PairTables out{Eigen::MatrixXd::Zero(K, K), Eigen::MatrixXd::Zero(K, K)};
    std::vector<Eigen::Index> slots;
    for (Eigen::Index a = 0; a < K; ++a) {
        for (Eigen::Index b = a + 1; b < K; ++b) {
            slots.clear();
            for (Eigen::Index t = 0; t < y.cols(); ++t)
                if (!std::isnan(y(a, t)) && !std::isnan(y(b, t)) && mu(t) > min_mu) slots.push_back(t);
            if (slots.empty())
                throw InsufficientDataError("calibrate_pairwise: locations " + std::to_string(a) + " and " +
                                            std::to_string(b) + " share no usable slot");
            double m = 0;
            for (auto t : slots) m += (y(b, t) - y(a, t)) / mu(t);
            m /= double(slots.size());
            double v = 0;
            for (auto t : slots) {
                const double r = (y(a, t) + mu(t) * m - y(b, t)) / mu(t);
                v += r * r;
            }
            v /= double(slots.size());
            out.mu_pair(a, b) = m;
            out.mu_pair(b, a) = -m;
            out.sigma_pair_sq(a, b) = out.sigma_pair_sq(b, a) = v;
        }
    }
    return out;
}

PairTables calibrate_pairwise(const TraceSet& traces, double min_mu) {
    return calibrate_pairwise(traces.dense(), min_mu);
}

InferenceParams calibrate(const TraceSet& traces, const CalibrationThresholds& thr) {
    const Eigen::MatrixXd y = traces.dense();
    auto pairs = calibrate_pairwise(y, thr.pairwise_min_mu);
    InferenceParams p;
    p.sigma0_sq = calibrate_measurement_variance(y, thr.measurement_min_mu);
    p.sigma_d_sq = calibrate_temporal_variance(y);
    p.mu_pair = std::move(pairs.mu_pair);
    p.sigma_pair_sq = std::move(pairs.sigma_pair_sq);
    return p;
}

InferenceParams LocationModel::implied_params(double sigma0_sq, double sigma_d_sq) const {
    const auto K = offsets.size();
    InferenceParams p;
    p.sigma0_sq = sigma0_sq;
    p.sigma_d_sq = sigma_d_sq;
    p.mu_pair = Eigen::MatrixXd::Zero(K, K);
    p.sigma_pair_sq = Eigen::MatrixXd::Zero(K, K);
    for (Eigen::Index i = 0; i < K; ++i)
        for (Eigen::Index j = 0; j < K; ++j)
            if (i != j) {
                p.mu_pair(i, j) = offsets(j) - offsets(i);
                p.sigma_pair_sq(i, j) = noise_var(i) + noise_var(j);
            }
    return p;
}

LocationModel random_location_model(int K, std::uint64_t seed) {
    if (K < 1) throw DomainError("random_location_model: K must be >= 1");
    Rng rng(seed);
    std::uniform_real_distribution<double> off(-0.075, 0.075), var(0.0005, 0.05);
    LocationModel m{Eigen::VectorXd(K), Eigen::VectorXd(K)};
    for (int k = 0; k < K; ++k) {
        m.offsets(k) = off(rng);
        m.noise_var(k) = var(rng);
    }
    return m;
}

Eigen::MatrixXd location_model_traces(const Trajectory& mu, const LocationModel& model, std::uint64_t seed) {
    Rng rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const auto K = model.offsets.size();
    Eigen::MatrixXd y(K, static_cast<Eigen::Index>(mu.size()));
    for (Eigen::Index t = 0; t < y.cols(); ++t)
        for (Eigen::Index k = 0; k < K; ++k)
            y(k, t) = mu[t] * (1.0 + model.offsets(k) + std::sqrt(model.noise_var(k)) * z(rng));
    return y;
}

Eigen::MatrixXd measurement_noise_traces(const Trajectory& mu, int L, double sigma0_sq, std::uint64_t seed) {
    if (L < 2) throw DomainError("measurement_noise_traces: need L >= 2");
    Rng rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    const double sigma0 = std::sqrt(sigma0_sq);
    // centring L iid draws leaves variance (L-1)/L; rescale back to 1
    const double rescale = std::sqrt(double(L) / double(L - 1));
    Eigen::MatrixXd y(L, static_cast<Eigen::Index>(mu.size()));
    Eigen::VectorXd c(L);
    for (Eigen::Index t = 0; t < y.cols(); ++t) {
        for (int k = 0; k < L; ++k) c(k) = z(rng);
        c.array() -= c.mean();
        y.col(t) = (mu[t] * (1.0 + sigma0 * rescale * c.array())).matrix();
    }
    return y;
}

Eigen::MatrixXd random_walk_traces(int T, int L, double start, double sigma_d_sq, std::uint64_t seed) {
    if (T < 2 || L < 1) throw DomainError("random_walk_traces: need T >= 2 and L >= 1");
    Rng rng(seed);
    std::normal_distribution<double> step(0.0, std::sqrt(sigma_d_sq));
    Eigen::MatrixXd y(L, T);
    y.col(0).setConstant(start);
    for (int t = 1; t < T; ++t)
        for (int k = 0; k < L; ++k) y(k, t) = y(k, t - 1) + step(rng);
    return y;
}

}  // namespace aqsense
