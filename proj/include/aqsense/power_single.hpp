#pragma once

// Exact power control for one device: finite-horizon MDP over
// (slot, remaining sensings, slots since last sensing, recorded value,
// current value), solved by backward induction.

#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "aqsense/environment.hpp"
#include "aqsense/inference.hpp"
#include "aqsense/schedule.hpp"

namespace aqsense {

enum class Action : std::uint8_t { Sleep = 0, Sense = 1 };

struct SingleState {
    int t = 1;            // slot, terminal at T + 1
    int p = 0;            // remaining sensings
    int d = 1;            // slots since last sensing, in [1, delta_T]
    std::size_t r = 0;    // index of the value recorded at the last sensing
    std::size_t e = 0;    // index of the current coarse value

    friend bool operator==(const SingleState&, const SingleState&) = default;
};

/// Whether a device with `p` sensings left, `d` slots after its last sensing,
/// may sense at slot t. With `reserve` set, a voluntary sensing must leave
/// enough budget for the forced sensings of an all-sleep continuation, so a
/// device never runs dry while more than delta_T - 1 slots remain.
inline bool sensing_allowed(int t, int p, int d, const PlanningConfig& cfg, bool reserve) {
    if (p <= 0) return false;
    if (d >= cfg.delta_T || !reserve) return true;
    return p - 1 >= (cfg.T - t) / cfg.delta_T;
}

struct StepResult {
    SingleState next;
    double reward;
};

/// The single-device decision problem: planning horizon, device location,
/// environment chain and inference parameters. Rewards for every
/// (d, r, e) combination are tabulated on construction.
class SingleDeviceMdp {
public:
    /// `reserve_budget` restricts voluntary sensing as in sensing_allowed;
    /// without it the action rules are the bare forced-sense / forced-sleep pair.
    SingleDeviceMdp(PlanningConfig cfg, std::size_t device, EnvironmentModel env, InferenceParams params,
                    bool reserve_budget = true);

    const PlanningConfig& config() const { return cfg_; }
    const EnvironmentModel& environment() const { return env_; }
    const InferenceParams& params() const { return params_; }
    std::size_t device() const { return device_; }
    bool reserves_budget() const { return reserve_; }

    bool available(const SingleState& s, Action a) const;
    bool terminal(const SingleState& s) const { return s.t == cfg_.T + 1; }

    /// -sum_k J_{k,t} for the slot, given the action.
    double reward(const SingleState& s, Action a) const;
    /// Throws DomainError for an unavailable action.
    StepResult step(const SingleState& s, Action a, std::size_t next_e) const;

    SingleState initial_state(std::size_t mu0, std::size_t mu1) const { return {1, cfg_.E, 1, mu0, mu1}; }

private:
    PlanningConfig cfg_;
    std::size_t device_;
    EnvironmentModel env_;
    InferenceParams params_;
    bool reserve_;
    Eigen::MatrixXd sleep_reward_;  // row (d - 1) * |Y| + r, column e
    Eigen::VectorXd sense_reward_;  // by e
};

/// Free-function form of SingleDeviceMdp::step.
inline StepResult single_step(const SingleState& s, Action a, std::size_t next_e, const SingleDeviceMdp& mdp) {
    return mdp.step(s, a, next_e);
}

/// Optimal values and actions for slots 1..T. Terminal values are zero and
/// are not stored.
class PolicyTable {
public:
    PolicyTable() = default;
    PolicyTable(int T, int E, int delta_T, std::size_t n_values);

    int horizon() const { return T_; }
    int budget() const { return E_; }
    int max_sleep() const { return delta_T_; }
    std::size_t value_count() const { return n_; }

    std::size_t index(const SingleState& s) const;
    double value(const SingleState& s) const;
    Action action(const SingleState& s) const;

    std::vector<double>& values() { return value_; }
    const std::vector<double>& values() const { return value_; }
    std::vector<std::uint8_t>& actions() { return action_; }
    const std::vector<std::uint8_t>& actions() const { return action_; }

private:
    int T_ = 0, E_ = 0, delta_T_ = 0;
    std::size_t n_ = 0;
    std::vector<double> value_;
    std::vector<std::uint8_t> action_;
};

/// Bytes dp_solve needs for the table of an instance.
std::size_t policy_memory_estimate(const PlanningConfig& cfg, std::size_t n_values);

/// Backward induction with exact expectation over the next coarse value.
/// Ties prefer Sleep. Throws ResourceError if the table exceeds
/// `memory_budget` bytes; quantize the environment first in that case.
PolicyTable dp_solve(const SingleDeviceMdp& mdp, std::size_t memory_budget = std::size_t(1) << 30);

/// E[V(S_1)] with mu_0 drawn from the stationary law and mu_1 from its row.
double expected_initial_value(const PolicyTable& policy, const SingleDeviceMdp& mdp);

struct PolicyRun {
    Schedule schedule;
    double J_bar = 0;
    double reward_sum = 0;      // sum of MDP rewards along the executed path
    int snapped_values = 0;     // trajectory values not in the value space
};

/// Executes the policy online along one trajectory (length T + 1).
PolicyRun run_policy(const PolicyTable& policy, const SingleDeviceMdp& mdp, const Trajectory& mu);

}  // namespace aqsense
