#include "aqsense/power_single.hpp"

#include <algorithm>

namespace aqsense {

SingleDeviceMdp::SingleDeviceMdp(PlanningConfig cfg, std::size_t device, EnvironmentModel env, InferenceParams params,
                                 bool reserve_budget)
    : cfg_(cfg), device_(device), env_(std::move(env)), params_(std::move(params)), reserve_(reserve_budget) {
    if (cfg_.T < 1 || cfg_.E < 0 || cfg_.delta_T < 1 || cfg_.K < 1)
        throw DomainError("single-device MDP: need T >= 1, E >= 0, delta_T >= 1, K >= 1");
    if (params_.locations() != cfg_.K) throw DomainError("single-device MDP: params must cover K locations");
    if (device_ >= static_cast<std::size_t>(cfg_.K)) throw DomainError("single-device MDP: device location out of range");
    validate(env_);
    validate(params_);

    const auto n = static_cast<Eigen::Index>(env_.size());
    sleep_reward_.resize(cfg_.delta_T * n, n);
    sense_reward_.resize(n);
    const std::vector<std::size_t> none, self{0};
    for (Eigen::Index e = 0; e < n; ++e) {
        const double mu = env_.values[e];
        const auto m = measurement_estimate(mu, params_);
        const std::vector<LastMeasurement> fresh{{device_, 0, m.mean, m.variance}};
        sense_reward_(e) = -total_joint_error(infer_map(fresh, mu, params_, self));
        for (int d = 1; d <= cfg_.delta_T; ++d)
            for (Eigen::Index r = 0; r < n; ++r) {
                const auto rec = measurement_estimate(double(env_.values[r]), params_);
                const std::vector<LastMeasurement> old{{device_, d, rec.mean, rec.variance}};
                sleep_reward_((d - 1) * n + r, e) = -total_joint_error(infer_map(old, mu, params_, none));
            }
    }
}

bool SingleDeviceMdp::available(const SingleState& s, Action a) const {
    if (a == Action::Sense) return sensing_allowed(s.t, s.p, s.d, cfg_, reserve_);
    return !(s.p > 0 && s.d == cfg_.delta_T);
}

double SingleDeviceMdp::reward(const SingleState& s, Action a) const {
    const auto n = static_cast<Eigen::Index>(env_.size());
    if (a == Action::Sense) return sense_reward_(static_cast<Eigen::Index>(s.e));
    return sleep_reward_((s.d - 1) * n + static_cast<Eigen::Index>(s.r), static_cast<Eigen::Index>(s.e));
}

StepResult SingleDeviceMdp::step(const SingleState& s, Action a, std::size_t next_e) const {
    if (terminal(s)) throw DomainError("single_step: state is terminal");
    if (!available(s, a)) throw DomainError("single_step: action not available in this state");
    if (next_e >= env_.size()) throw DomainError("single_step: next value index out of range");
    StepResult out{s, reward(s, a)};
    out.next.t = s.t + 1;
    out.next.e = next_e;
    if (a == Action::Sense) {
        out.next.p = s.p - 1;
        out.next.d = 1;
        out.next.r = s.e;
    } else {
        // a depleted device already at delta_T stays there
        out.next.d = std::min(s.d + 1, cfg_.delta_T);
    }
    return out;
}

PolicyTable::PolicyTable(int T, int E, int delta_T, std::size_t n_values)
    : T_(T), E_(E), delta_T_(delta_T), n_(n_values) {
    const std::size_t size = std::size_t(T) * std::size_t(E + 1) * std::size_t(delta_T) * n_ * n_;
    value_.assign(size, 0.0);
    action_.assign(size, 0);
}

std::size_t PolicyTable::index(const SingleState& s) const {
    if (s.t < 1 || s.t > T_ || s.p < 0 || s.p > E_ || s.d < 1 || s.d > delta_T_ || s.r >= n_ || s.e >= n_)
        throw DomainError("policy table: state out of range");
    return ((((std::size_t(s.t - 1) * std::size_t(E_ + 1) + std::size_t(s.p)) * std::size_t(delta_T_) +
              std::size_t(s.d - 1)) * n_ + s.r) * n_) + s.e;
}

double PolicyTable::value(const SingleState& s) const {
    if (s.t == T_ + 1) return 0.0;
    return value_[index(s)];
}

Action PolicyTable::action(const SingleState& s) const { return static_cast<Action>(action_[index(s)]); }

std::size_t policy_memory_estimate(const PlanningConfig& cfg, std::size_t n) {
    return std::size_t(cfg.T) * std::size_t(cfg.E + 1) * std::size_t(cfg.delta_T) * n * n *
           (sizeof(double) + sizeof(std::uint8_t));
}

PolicyTable dp_solve(const SingleDeviceMdp& mdp, std::size_t memory_budget) {
    const auto& cfg = mdp.config();
    const auto& env = mdp.environment();
    const std::size_t n = env.size();
    const std::size_t need = policy_memory_estimate(cfg, n);
    if (need > memory_budget)
        throw ResourceError("dp_solve: policy table needs " + std::to_string(need) + " bytes (budget " +
                            std::to_string(memory_budget) + "); quantize the value space");

    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    PolicyTable policy(cfg.T, cfg.E, cfg.delta_T, n);
    const auto N = static_cast<Eigen::Index>(n);
    const Eigen::Index rows = Eigen::Index(cfg.E + 1) * cfg.delta_T * N;  // (p, d, r)
    const std::size_t layer = std::size_t(rows) * n;

    // cont(p,d,r; e) = sum_e' P(e, e') V_{t+1}(p, d, r, e')
    RowMatrix cont = RowMatrix::Zero(rows, N);
    const Eigen::MatrixXd Pt = env.transition.transpose();
    for (int t = cfg.T; t >= 1; --t) {
        double* V = policy.values().data() + std::size_t(t - 1) * layer;
        std::uint8_t* A = policy.actions().data() + std::size_t(t - 1) * layer;
        auto row_of = [&](int p, int d, Eigen::Index r) { return (Eigen::Index(p) * cfg.delta_T + (d - 1)) * N + r; };
        for (int p = 0; p <= cfg.E; ++p)
            for (int d = 1; d <= cfg.delta_T; ++d)
                for (Eigen::Index r = 0; r < N; ++r)
                    for (Eigen::Index e = 0; e < N; ++e) {
                        const SingleState s{t, p, d, std::size_t(r), std::size_t(e)};
                        double best = 0;
                        std::uint8_t act = 0;
                        bool have = false;
                        if (mdp.available(s, Action::Sleep)) {
                            best = mdp.reward(s, Action::Sleep) + cont(row_of(p, std::min(d + 1, cfg.delta_T), r), e);
                            have = true;
                        }
                        if (mdp.available(s, Action::Sense)) {
                            const double q = mdp.reward(s, Action::Sense) + cont(row_of(p - 1, 1, e), e);
                            if (!have || q > best) {
                                best = q;
                                act = 1;
                            }
                        }
                        const auto idx = std::size_t(row_of(p, d, r)) * n + std::size_t(e);
                        V[idx] = best;
                        A[idx] = act;
                    }
        const Eigen::Map<const RowMatrix> Vt(V, rows, N);
        cont.noalias() = Vt * Pt;
    }
    return policy;
}

double expected_initial_value(const PolicyTable& policy, const SingleDeviceMdp& mdp) {
    const auto& env = mdp.environment();
    double v = 0;
    for (std::size_t a = 0; a < env.size(); ++a)
        for (std::size_t b = 0; b < env.size(); ++b) {
            const double w = env.stationary(Eigen::Index(a)) * env.transition(Eigen::Index(a), Eigen::Index(b));
            if (w > 0) v += w * policy.value(mdp.initial_state(a, b));
        }
    return v;
}

PolicyRun run_policy(const PolicyTable& policy, const SingleDeviceMdp& mdp, const Trajectory& mu) {
    const auto& cfg = mdp.config();
    if (static_cast<int>(mu.size()) != cfg.T + 1) throw DomainError("run_policy: trajectory length must be T + 1");
    if (policy.horizon() != cfg.T || policy.budget() != cfg.E || policy.max_sleep() != cfg.delta_T ||
        policy.value_count() != mdp.environment().size())
        throw DomainError("run_policy: policy table does not match the MDP");

    PolicyRun run;
    std::vector<std::size_t> idx(mu.size());
    for (std::size_t t = 0; t < mu.size(); ++t) {
        idx[t] = mdp.environment().nearest_index(mu[t]);
        if (double(mdp.environment().values[idx[t]]) != mu[t]) ++run.snapped_values;
    }

    run.schedule = Schedule::initial(cfg.K, cfg.T, {mdp.device()});
    SingleState s = mdp.initial_state(idx[0], idx[1]);
    for (int t = 1; t <= cfg.T; ++t) {
        const Action a = policy.action(s);
        if (a == Action::Sense) run.schedule.phi(Eigen::Index(mdp.device()), t) = 1;
        const std::size_t next_e = t < cfg.T ? idx[std::size_t(t) + 1] : s.e;
        const auto step = mdp.step(s, a, next_e);
        run.reward_sum += step.reward;
        s = step.next;
    }
    run.J_bar = evaluate_schedule(run.schedule, mu, mdp.params()).J_bar;
    return run;
}

}  // namespace aqsense
