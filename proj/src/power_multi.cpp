#include "aqsense/power_multi.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace aqsense {

MultiDeviceMdp::MultiDeviceMdp(PlanningConfig cfg, std::vector<std::size_t> deployed, EnvironmentModel env,
                               InferenceParams params, bool reserve_budget)
    : cfg_(cfg), deployed_(std::move(deployed)), env_(std::move(env)), params_(std::move(params)),
      reserve_(reserve_budget) {
    if (cfg_.T < 1 || cfg_.E < 0 || cfg_.delta_T < 1 || cfg_.K < 1)
        throw DomainError("multi-device MDP: need T >= 1, E >= 0, delta_T >= 1, K >= 1");
    if (deployed_.empty()) throw DomainError("multi-device MDP: no deployed devices");
    if (params_.locations() != cfg_.K) throw DomainError("multi-device MDP: params must cover K locations");
    std::vector<char> seen(static_cast<std::size_t>(cfg_.K), 0);
    for (auto k : deployed_) {
        if (k >= seen.size() || seen[k]) throw DomainError("multi-device MDP: invalid deployment set");
        seen[k] = 1;
    }
    validate(env_);
    validate(params_);
}

MultiState MultiDeviceMdp::initial_state(std::size_t mu0, std::size_t mu1) const {
    const auto L = deployed_.size();
    if (mu0 >= env_.size() || mu1 >= env_.size()) throw DomainError("initial_state: value index out of range");
    return {1, std::vector<int>(L, cfg_.E), std::vector<int>(L, 1), std::vector<std::size_t>(L, mu0), mu1, 0};
}

bool MultiDeviceMdp::available(const MultiState& s, Action a) const {
    const auto l = static_cast<std::size_t>(s.turn);
    if (a == Action::Sense) return sensing_allowed(s.t, s.p[l], s.d[l], cfg_, reserve_);
    return !(s.p[l] > 0 && s.d[l] == cfg_.delta_T);
}

std::vector<LastMeasurement> MultiDeviceMdp::measurements(const MultiState& s, int extra,
                                                          std::vector<std::size_t>& sensing) const {
    std::vector<LastMeasurement> last(deployed_.size());
    sensing.clear();
    const double now = env_.values[s.e];
    for (std::size_t i = 0; i < deployed_.size(); ++i) {
        if (s.d[i] == 0 || static_cast<int>(i) == extra) {
            const auto m = measurement_estimate(now, params_);
            last[i] = {deployed_[i], 0, m.mean, m.variance};
            sensing.push_back(i);
        } else {
            const auto m = measurement_estimate(double(env_.values[s.r[i]]), params_);
            last[i] = {deployed_[i], s.d[i], m.mean, m.variance};
        }
    }
    return last;
}

std::vector<double> MultiDeviceMdp::location_errors_if_sensing(const MultiState& s, int dev) const {
    std::vector<std::size_t> sensing;
    const auto last = measurements(s, dev, sensing);
    const auto cells = infer_map(last, double(env_.values[s.e]), params_, sensing);
    std::vector<double> out(cells.size());
    std::transform(cells.begin(), cells.end(), out.begin(), [](const auto& c) { return c.joint_error; });
    return out;
}

std::vector<double> MultiDeviceMdp::location_errors(const MultiState& s) const {
    return location_errors_if_sensing(s, -1);
}

double MultiDeviceMdp::slot_error(const MultiState& s) const {
    const auto e = location_errors(s);
    return std::accumulate(e.begin(), e.end(), 0.0);
}

MultiStepResult MultiDeviceMdp::step(const MultiState& s, Action a, std::optional<std::size_t> next_e) const {
    if (terminal(s)) throw DomainError("multi_step: state is terminal");
    if (!available(s, a)) throw DomainError("multi_step: action not available in this state");
    if (last_turn(s) != next_e.has_value())
        throw DomainError("multi_step: next value must be supplied exactly on the last device's turn");
    if (next_e && *next_e >= env_.size()) throw DomainError("multi_step: next value index out of range");

    const auto l = static_cast<std::size_t>(s.turn);
    MultiStepResult out{s, 0.0};
    double before = 0, after = 0;
    if (a == Action::Sense) {
        out.next.p[l] -= 1;
        out.next.d[l] = 0;
        out.next.r[l] = s.e;
        after = slot_error(out.next);
        before = s.turn == 0 ? 0.0 : slot_error(s);
    } else {
        after = slot_error(s);
        before = s.turn == 0 ? 0.0 : after;
    }
    out.reward = before - after;

    if (next_e) {
        out.next.t += 1;
        out.next.turn = 0;
        out.next.e = *next_e;
        for (auto& d : out.next.d) d = std::min(d + 1, cfg_.delta_T);
    } else {
        out.next.turn += 1;
    }
    return out;
}

double power_deficiency(int t, int p, int T, int E) {
    if (E < 1 || T < 1) throw DomainError("power_deficiency: need T >= 1 and E >= 1");
    if (t < 0 || t > T || p < 0) throw DomainError("power_deficiency: need 0 <= t <= T and p >= 0");
    if (p == 0) return 1.0;
    return 1.0 / (1.0 + std::exp(double(T) / E - double(T - t) / p));
}

Eigen::VectorXd feature_vector(const MultiState& s, Action a, const MultiDeviceMdp& mdp) {
    const auto& cfg = mdp.config();
    const int L = mdp.devices();
    const FeatureLayout lay{cfg.K, L};
    Eigen::VectorXd f = Eigen::VectorXd::Zero(lay.size());
    f(lay.turn_begin() + s.turn) = 1.0;
    for (int i = 0; i < L; ++i) f(lay.power_begin() + i) = s.p[i];

    const auto before = mdp.location_errors(s);
    if (a == Action::Sense) {
        const auto after = mdp.location_errors_if_sensing(s, s.turn);
        const double pd = power_deficiency(s.t, s.p[s.turn], cfg.T, std::max(cfg.E, 1));
        for (int k = 0; k < cfg.K; ++k) f(lay.sense_begin() + k) = before[k] - after[k];
        for (int i = 0; i < L; ++i) {
            const auto k = mdp.deployed()[i];
            f(lay.sense_begin() + cfg.K + i) = pd * (before[k] - after[k]);
        }
        f(lay.sense_begin() + cfg.K + L) = 1.0;
    } else {
        const double total = std::accumulate(before.begin(), before.end(), 0.0);
        for (int j = s.turn + 1; j < L; ++j) {
            if (s.p[j] <= 0) continue;
            const auto with_j = mdp.location_errors_if_sensing(s, j);
            const double gain = total - std::accumulate(with_j.begin(), with_j.end(), 0.0);
            f(lay.sleep_begin() + j) = gain;
            f(lay.sleep_begin() + L + j) = gain * power_deficiency(s.t, s.p[j], cfg.T, std::max(cfg.E, 1));
        }
        f(lay.sleep_begin() + 2 * L) = 1.0;
    }
    f(lay.time_begin()) = cfg.T - s.t;
    return f;
}

FeatureScaler::FeatureScaler(FeatureLayout layout)
    : layout_(layout),
      lo_(Eigen::VectorXd::Constant(layout.size(), std::numeric_limits<double>::infinity())),
      hi_(Eigen::VectorXd::Constant(layout.size(), -std::numeric_limits<double>::infinity())) {}

bool FeatureScaler::active(int i, Action a) const {
    if (i >= layout_.sense_begin() && i < layout_.sleep_begin()) return a == Action::Sense;
    if (i >= layout_.sleep_begin() && i < layout_.time_begin()) return a == Action::Sleep;
    return true;
}

void FeatureScaler::observe(const Eigen::VectorXd& raw, Action a) {
    for (int i = 0; i < layout_.size(); ++i)
        if (active(i, a)) {
            lo_(i) = std::min(lo_(i), raw(i));
            hi_(i) = std::max(hi_(i), raw(i));
        }
}

Eigen::VectorXd FeatureScaler::apply(const Eigen::VectorXd& raw, Action a) const {
    if (raw.size() != layout_.size()) throw DomainError("feature scaler: dimension mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(raw.size());
    for (int i = 0; i < layout_.size(); ++i) {
        if (!active(i, a)) continue;
        const double range = hi_(i) - lo_(i);
        const double v = (std::isfinite(range) && range > 1e-12) ? (raw(i) - lo_(i)) / range : raw(i);
        out(i) = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

std::vector<int> q_network_sizes(int K, int L) { return {5 * L + K + 3, 4 * K + L, 4 * K, 3 * K, 2 * K, K, 1}; }

double QNetwork::q(const MultiState& s, Action a, const MultiDeviceMdp& mdp) const {
    return output_scale * net.forward(scaler.apply(feature_vector(s, a, mdp), a));
}

Action greedy_action(const QNetwork& q, const MultiState& s, const MultiDeviceMdp& mdp) {
    const bool sleep = mdp.available(s, Action::Sleep), sense = mdp.available(s, Action::Sense);
    if (!sense) return Action::Sleep;
    if (!sleep) return Action::Sense;
    return q.q(s, Action::Sense, mdp) > q.q(s, Action::Sleep, mdp) ? Action::Sense : Action::Sleep;
}

Action random_action(const MultiDeviceMdp& mdp, const MultiState& s, Rng& rng) {
    const bool sleep = mdp.available(s, Action::Sleep), sense = mdp.available(s, Action::Sense);
    if (sleep && sense) return std::bernoulli_distribution(0.5)(rng) ? Action::Sense : Action::Sleep;
    return sense ? Action::Sense : Action::Sleep;
}

Action epsilon_greedy_action(const QNetwork& q, const MultiState& s, const MultiDeviceMdp& mdp, double eps, Rng& rng) {
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < eps) return random_action(mdp, s, rng);
    return greedy_action(q, s, mdp);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw DomainError("replay buffer: capacity must be positive");
}

void ReplayBuffer::push(TrainingSample sample) {
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back(std::move(sample));
}

std::vector<TrainingSample> ReplayBuffer::sample(std::size_t n, Rng& rng) const {
    n = std::min(n, entries_.size());
    std::vector<std::size_t> idx(entries_.size());
    std::iota(idx.begin(), idx.end(), 0);
    // partial Fisher-Yates: the first n slots become a uniform draw without replacement
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
        std::swap(idx[i], idx[pick(rng)]);
    }
    std::vector<TrainingSample> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.push_back(entries_[idx[i]]);
    return out;
}

namespace {

std::vector<std::size_t> value_indices(const MultiDeviceMdp& mdp, const Trajectory& mu, int& snapped) {
    const auto& env = mdp.environment();
    std::vector<std::size_t> idx(mu.size());
    snapped = 0;
    for (std::size_t t = 0; t < mu.size(); ++t) {
        idx[t] = env.nearest_index(mu[t]);
        if (double(env.values[idx[t]]) != mu[t]) ++snapped;
    }
    return idx;
}

std::optional<std::size_t> next_value(const MultiDeviceMdp& mdp, const MultiState& s,
                                      const std::vector<std::size_t>& idx) {
    if (!mdp.last_turn(s)) return std::nullopt;
    const auto t = static_cast<std::size_t>(s.t);
    return t + 1 < idx.size() ? idx[t + 1] : s.e;
}

Action forced_or(const MultiDeviceMdp& mdp, const MultiState& s, Action wanted) {
    if (mdp.available(s, wanted)) return wanted;
    return wanted == Action::Sense ? Action::Sleep : Action::Sense;
}

struct Transition {
    Eigen::VectorXd raw;
    Action action;
    double reward;
};

}  // namespace

Rollout rollout(const MultiPolicy& policy, const MultiDeviceMdp& mdp, const Trajectory& mu) {
    const auto& cfg = mdp.config();
    if (static_cast<int>(mu.size()) != cfg.T + 1) throw DomainError("rollout: trajectory length must be T + 1");
    Rollout out;
    const auto idx = value_indices(mdp, mu, out.snapped_values);
    out.schedule = Schedule::initial(cfg.K, cfg.T, mdp.deployed());
    MultiState s = mdp.initial_state(idx[0], idx[1]);
    while (!mdp.terminal(s)) {
        const Action a = forced_or(mdp, s, policy(s));
        if (a == Action::Sense) out.schedule.phi(Eigen::Index(mdp.deployed()[s.turn]), s.t) = 1;
        const auto step = mdp.step(s, a, next_value(mdp, s, idx));
        out.reward_sum += step.reward;
        s = step.next;
    }
    out.J_bar = evaluate_schedule(out.schedule, mu, mdp.params()).J_bar;
    return out;
}

Rollout greedy_rollout(const QNetwork& q, const MultiDeviceMdp& mdp, const Trajectory& mu) {
    return rollout([&](const MultiState& s) { return greedy_action(q, s, mdp); }, mdp, mu);
}

Rollout random_rollout(const MultiDeviceMdp& mdp, const Trajectory& mu, std::uint64_t seed) {
    Rng rng(seed);
    return rollout([&](const MultiState& s) { return random_action(mdp, s, rng); }, mdp, mu);
}

QNetwork q_learning_train(const MultiDeviceMdp& mdp, const TrainConfig& tc, std::vector<TrainLogRow>* log) {
    const auto& cfg = mdp.config();
    const auto& env = mdp.environment();
    if (tc.episodes < 0 || tc.batch < 1 || tc.bootstrap_episodes < 1 || tc.steps_per_episode < 0)
        throw DomainError("q_learning_train: invalid training configuration");
    if (tc.epsilon_start < 0 || tc.epsilon_start > 1 || tc.epsilon_end < 0 || tc.epsilon_end > 1)
        throw DomainError("q_learning_train: epsilon must stay in [0,1]");
    if (tc.gamma < 0 || tc.gamma > 1) throw DomainError("q_learning_train: gamma must be in [0,1]");

    Rng rng(tc.seed);
    const FeatureLayout layout{cfg.K, mdp.devices()};
    QNetwork q{Mlp<double>::random(q_network_sizes(cfg.K, mdp.devices()), rng()), FeatureScaler(layout), 1.0};

    // Bootstrap on Monte-Carlo returns of the random policy.
    std::vector<Transition> boot;
    std::vector<double> returns;
    for (int ep = 0; ep < tc.bootstrap_episodes; ++ep) {
        const auto path = sample_state_path(env, cfg.T, rng);
        MultiState s = mdp.initial_state(path[0], path[1]);
        const auto first = boot.size();
        while (!mdp.terminal(s)) {
            const Action a = random_action(mdp, s, rng);
            auto raw = feature_vector(s, a, mdp);
            const auto step = mdp.step(s, a, next_value(mdp, s, path));
            q.scaler.observe(raw, a);
            boot.push_back({std::move(raw), a, step.reward});
            s = step.next;
        }
        returns.resize(boot.size());
        double g = 0;
        for (std::size_t i = boot.size(); i-- > first;) {
            g = boot[i].reward + tc.gamma * g;
            returns[i] = g;
        }
    }
    double scale = 1.0;
    for (double g : returns) scale = std::max(scale, std::abs(g));
    q.output_scale = scale;

    const auto n_boot = static_cast<Eigen::Index>(boot.size());
    Eigen::MatrixXd X(layout.size(), n_boot);
    Eigen::VectorXd y(n_boot);
    for (Eigen::Index i = 0; i < n_boot; ++i) {
        X.col(i) = q.scaler.apply(boot[i].raw, boot[i].action);
        y(i) = returns[i] / scale;
    }
    const Eigen::Index mb = std::min<Eigen::Index>(tc.batch, n_boot);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n_boot));
    std::iota(order.begin(), order.end(), 0);
    Eigen::MatrixXd Xb(layout.size(), mb);
    Eigen::VectorXd yb(mb);
    for (int epoch = 0; epoch < tc.bootstrap_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start + mb <= n_boot; start += mb) {
            for (Eigen::Index j = 0; j < mb; ++j) {
                Xb.col(j) = X.col(order[std::size_t(start + j)]);
                yb(j) = y(order[std::size_t(start + j)]);
            }
            q.net.train_batch(Xb, yb, tc.learning_rate);
        }
    }

    // Epsilon-greedy Q-learning with replay.
    ReplayBuffer replay(tc.buffer_capacity ? tc.buffer_capacity : 10 * std::size_t(tc.batch));
    const Trajectory eval_mu = sample_trajectory(env, cfg.T, tc.eval_seed ? tc.eval_seed : tc.seed ^ 0x9e3779b97f4a7c15ULL);
    for (int ep = 1; ep <= tc.episodes; ++ep) {
        const double frac = tc.episodes > 1 ? double(ep - 1) / double(tc.episodes - 1) : 0.0;
        const double eps = tc.epsilon_start + (tc.epsilon_end - tc.epsilon_start) * frac;
        const auto path = sample_state_path(env, cfg.T, rng);
        MultiState s = mdp.initial_state(path[0], path[1]);
        while (!mdp.terminal(s)) {
            const Action a = epsilon_greedy_action(q, s, mdp, eps, rng);
            const auto step = mdp.step(s, a, next_value(mdp, s, path));
            double target = step.reward;
            if (!mdp.terminal(step.next)) {
                double best = -std::numeric_limits<double>::infinity();
                for (Action b : {Action::Sleep, Action::Sense})
                    if (mdp.available(step.next, b)) best = std::max(best, q.q(step.next, b, mdp));
                target += tc.gamma * best;
            }
            replay.push({q.scaler.apply(feature_vector(s, a, mdp), a), target / q.output_scale});
            s = step.next;
        }
        const auto batch = replay.sample(std::size_t(tc.batch), rng);
        double mse = 0;
        for (int k = 0; k < tc.steps_per_episode; ++k) {
            const double m = mlp_train_batch(q.net, batch, tc.learning_rate);
            if (k == 0) mse = m;
        }
        if (log) log->push_back({ep, eps, greedy_rollout(q, mdp, eval_mu).J_bar, mse});
    }
    return q;
}

// --- exact solvers ------------------------------------------------------------

namespace {

std::vector<long> key_of(const MultiState& s) {
    std::vector<long> k{s.t, s.turn, long(s.e)};
    for (std::size_t i = 0; i < s.p.size(); ++i) {
        k.push_back(s.p[i]);
        k.push_back(s.d[i]);
        k.push_back(long(s.r[i]));
    }
    return k;
}

class TurnTakingSolver {
public:
    explicit TurnTakingSolver(const MultiDeviceMdp& mdp) : mdp_(mdp) {}

    double value(const MultiState& s) {
        if (mdp_.terminal(s)) return 0.0;
        auto key = key_of(s);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;
        const auto& P = mdp_.environment().transition;
        double best = -std::numeric_limits<double>::infinity();
        for (Action a : {Action::Sleep, Action::Sense}) {
            if (!mdp_.available(s, a)) continue;
            double q = 0;
            if (!mdp_.last_turn(s)) {
                const auto st = mdp_.step(s, a, std::nullopt);
                q = st.reward + value(st.next);
            } else {
                for (std::size_t e = 0; e < mdp_.environment().size(); ++e) {
                    const double w = P(Eigen::Index(s.e), Eigen::Index(e));
                    if (w == 0) continue;
                    const auto st = mdp_.step(s, a, e);
                    q += w * (st.reward + value(st.next));
                }
            }
            best = std::max(best, q);
        }
        memo_.emplace(std::move(key), best);
        return best;
    }

private:
    const MultiDeviceMdp& mdp_;
    std::map<std::vector<long>, double> memo_;
};

class JointActionSolver {
public:
    explicit JointActionSolver(const MultiDeviceMdp& mdp) : mdp_(mdp) {}

    double value(const MultiState& s) {
        const auto& cfg = mdp_.config();
        if (s.t == cfg.T + 1) return 0.0;
        auto key = key_of(s);
        if (auto it = memo_.find(key); it != memo_.end()) return it->second;

        const int L = mdp_.devices();
        const auto& env = mdp_.environment();
        const auto& params = mdp_.params();
        const double now = env.values[s.e];
        double best = -std::numeric_limits<double>::infinity();
        for (unsigned mask = 0; mask < (1u << L); ++mask) {
            bool ok = true;
            for (int i = 0; i < L && ok; ++i) {
                const bool on = mask >> i & 1u;
                ok = on ? sensing_allowed(s.t, s.p[i], s.d[i], cfg, mdp_.reserves_budget())
                        : !(s.p[i] > 0 && s.d[i] == cfg.delta_T);
            }
            if (!ok) continue;

            std::vector<LastMeasurement> last(static_cast<std::size_t>(L));
            std::vector<std::size_t> sensing;
            MultiState next = s;
            next.t += 1;
            for (int i = 0; i < L; ++i) {
                const auto loc = mdp_.deployed()[i];
                if (mask >> i & 1u) {
                    const auto m = measurement_estimate(now, params);
                    last[i] = {loc, 0, m.mean, m.variance};
                    sensing.push_back(std::size_t(i));
                    next.p[i] -= 1;
                    next.d[i] = 1;
                    next.r[i] = s.e;
                } else {
                    const auto m = measurement_estimate(double(env.values[s.r[i]]), params);
                    last[i] = {loc, s.d[i], m.mean, m.variance};
                    next.d[i] = std::min(s.d[i] + 1, cfg.delta_T);
                }
            }
            const double reward = -total_joint_error(infer_map(last, now, params, sensing));
            double q = reward;
            for (std::size_t e = 0; e < env.size(); ++e) {
                const double w = env.transition(Eigen::Index(s.e), Eigen::Index(e));
                if (w == 0) continue;
                next.e = e;
                q += w * value(next);
            }
            best = std::max(best, q);
        }
        memo_.emplace(std::move(key), best);
        return best;
    }

private:
    const MultiDeviceMdp& mdp_;
    std::map<std::vector<long>, double> memo_;
};

}  // namespace

double solve_turn_taking(const MultiDeviceMdp& mdp, std::size_t mu0, std::size_t mu1) {
    TurnTakingSolver solver(mdp);
    return solver.value(mdp.initial_state(mu0, mu1));
}

double solve_joint_action(const MultiDeviceMdp& mdp, std::size_t mu0, std::size_t mu1) {
    JointActionSolver solver(mdp);
    return solver.value(mdp.initial_state(mu0, mu1));
}

}  // namespace aqsense
