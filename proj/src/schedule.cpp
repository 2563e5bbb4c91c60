#include "aqsense/schedule.hpp"

#include <algorithm>
#include <set>

namespace aqsense {

std::vector<std::string> planning_violations(const PlanningConfig& c) {
    std::vector<std::string> out;
    if (c.K < 1) out.emplace_back("K >= 1");
    if (c.L < 1) out.emplace_back("L >= 1");
    if (c.T < 1) out.emplace_back("T >= 1");
    if (c.E < 1) out.emplace_back("E >= 1");
    if (c.delta_T < 1) out.emplace_back("delta_T >= 1");
    if (!(c.L < c.K)) out.emplace_back("L < K");
    if (!(c.E < c.T)) out.emplace_back("E < T");
    if (!(static_cast<long long>(c.delta_T) * c.E > c.T)) out.emplace_back("delta_T * E > T");
    return out;
}

void require_valid(const PlanningConfig& cfg) {
    const auto v = planning_violations(cfg);
    if (!v.empty()) throw ValidationError("planning config violates constraint: " + v.front());
}

Schedule Schedule::initial(int K, int T, std::vector<std::size_t> deployed) {
    if (K < 1 || T < 0) throw DomainError("schedule: need K >= 1 and T >= 0");
    Schedule s{PhiMatrix::Zero(K, T + 1), std::move(deployed)};
    for (auto k : s.deployed) {
        if (k >= static_cast<std::size_t>(K)) throw DomainError("schedule: deployed location out of range");
        s.phi(static_cast<Eigen::Index>(k), 0) = 1;
    }
    return s;
}

std::string to_string(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::Energy: return "energy";
        case ViolationKind::SleepWindow: return "sleep_window";
        case ViolationKind::UndeployedSensing: return "undeployed_sensing";
        case ViolationKind::MissingInitial: return "missing_initial";
        case ViolationKind::DeviceBudget: return "device_budget";
    }
    return "unknown";
}

std::vector<Violation> validate_schedule(const Schedule& s, const PlanningConfig& cfg) {
    if (s.phi.rows() != cfg.K || s.phi.cols() != cfg.T + 1)
        throw DomainError("validate_schedule: phi must be K x (T+1)");
    std::vector<Violation> out;

    std::set<std::size_t> deployed;
    for (auto k : s.deployed) {
        if (k >= static_cast<std::size_t>(cfg.K)) throw DomainError("validate_schedule: deployed location out of range");
        if (!deployed.insert(k).second) out.push_back({ViolationKind::DeviceBudget, int(k), -1});
    }
    if (static_cast<int>(deployed.size()) > cfg.L) out.push_back({ViolationKind::DeviceBudget, -1, -1});

    for (int k = 0; k < cfg.K; ++k) {
        const auto row = s.phi.row(k);
        if (!deployed.count(std::size_t(k))) {
            for (int t = 0; t <= cfg.T; ++t)
                if (row(t)) out.push_back({ViolationKind::UndeployedSensing, k, t});
            continue;
        }
        if (!row(0)) out.push_back({ViolationKind::MissingInitial, k, 0});
        int used = 0;
        for (int t = 1; t <= cfg.T; ++t) used += row(t) ? 1 : 0;
        if (used > cfg.E) out.push_back({ViolationKind::Energy, k, -1});
        // window [t, t + delta_T] of delta_T + 1 slots must contain a sensing
        int silent = 0;
        for (int t = 0; t <= cfg.T; ++t) {
            silent = row(t) ? 0 : silent + 1;
            if (silent >= cfg.delta_T + 1) out.push_back({ViolationKind::SleepWindow, k, t - cfg.delta_T});
        }
    }
    return out;
}

namespace {

void check_structure(const Schedule& s, const Trajectory& mu) {
    if (s.deployed.empty()) throw DomainError("evaluate_schedule: no deployed devices");
    if (s.phi.cols() < 2) throw DomainError("evaluate_schedule: horizon must be >= 1");
    if (static_cast<Eigen::Index>(mu.size()) != s.phi.cols())
        throw DomainError("evaluate_schedule: trajectory length must be T + 1");
    std::vector<char> dep(static_cast<std::size_t>(s.phi.rows()), 0);
    for (auto k : s.deployed) {
        if (k >= dep.size() || dep[k]) throw DomainError("evaluate_schedule: invalid deployment set");
        dep[k] = 1;
        if (!s.phi(static_cast<Eigen::Index>(k), 0)) throw DomainError("evaluate_schedule: deployed device must sense at t = 0");
    }
    for (Eigen::Index k = 0; k < s.phi.rows(); ++k)
        if (!dep[k] && s.phi.row(k).any()) throw DomainError("evaluate_schedule: sensing at a location without a device");
}

}  // namespace

Evaluation evaluate_schedule(const Schedule& s, const Trajectory& mu, const InferenceParams& params) {
    check_structure(s, mu);
    const int T = s.horizon();
    const double K = double(s.locations());

    std::vector<LastMeasurement> last;
    last.reserve(s.deployed.size());
    for (auto k : s.deployed) {
        const auto m = measurement_estimate(mu[0], params);
        last.push_back({k, 0, m.mean, m.variance});
    }

    Evaluation ev;
    ev.per_slot.reserve(static_cast<std::size_t>(T));
    std::vector<std::size_t> sensing;
    for (int t = 1; t <= T; ++t) {
        sensing.clear();
        for (std::size_t i = 0; i < last.size(); ++i) {
            if (s.phi(static_cast<Eigen::Index>(last[i].location), t)) {
                const auto m = measurement_estimate(mu[t], params);
                last[i] = {last[i].location, 0, m.mean, m.variance};
                sensing.push_back(i);
            } else {
                ++last[i].age;
            }
        }
        const auto cells = infer_map(last, mu[t], params, sensing);
        ev.per_slot.push_back(total_joint_error(cells) / K);
    }
    double total = 0;
    for (double v : ev.per_slot) total += v;
    ev.J_bar = total / T;
    return ev;
}

Evaluation evaluate_schedule(const Schedule& s, const Trajectory& mu, const InferenceParams& params,
                             const PlanningConfig& cfg) {
    const auto v = validate_schedule(s, cfg);
    if (!v.empty())
        throw DomainError("evaluate_schedule: infeasible schedule (" + to_string(v.front().kind) + " at location " +
                          std::to_string(v.front().location) + ")");
    return evaluate_schedule(s, mu, params);
}

Schedule uniform_schedule(const PlanningConfig& cfg, const std::vector<std::size_t>& deployed) {
    if (cfg.T < 1 || cfg.E < 0) throw DomainError("uniform_schedule: need T >= 1 and E >= 0");
    auto s = Schedule::initial(cfg.K, cfg.T, deployed);
    if (cfg.E == 0) return s;
    const int gap = std::max(1, cfg.T / cfg.E);
    for (auto k : deployed) {
        int used = 0;
        for (int t = gap; t <= cfg.T && used < cfg.E; t += gap, ++used) s.phi(static_cast<Eigen::Index>(k), t) = 1;
    }
    return s;
}

}  // namespace aqsense
