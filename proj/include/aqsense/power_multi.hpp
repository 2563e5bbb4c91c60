#pragma once

// Multi-device power control. Devices act one after another inside each slot
// (turn-taking), so every state has at most two actions; rewards are the
// marginal change of the slot's summed joint error. The state-action value is
// approximated by an MLP trained with Q-learning and experience replay.

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "aqsense/environment.hpp"
#include "aqsense/mlp.hpp"
#include "aqsense/power_single.hpp"
#include "aqsense/schedule.hpp"

namespace aqsense {

struct MultiState {
    int t = 1;
    std::vector<int> p;          // remaining sensings per device
    std::vector<int> d;          // slots since last sensing; 0 = sensed earlier in this slot
    std::vector<std::size_t> r;  // recorded value index per device
    std::size_t e = 0;           // current value index
    int turn = 0;                // device whose turn it is, 0-based

    friend bool operator==(const MultiState&, const MultiState&) = default;
};

struct MultiStepResult {
    MultiState next;
    double reward;
};

class MultiDeviceMdp {
public:
    /// `deployed[i]` is the location of device i; devices act in that order.
    /// `reserve_budget` restricts voluntary sensing as in sensing_allowed.
    MultiDeviceMdp(PlanningConfig cfg, std::vector<std::size_t> deployed, EnvironmentModel env, InferenceParams params,
                   bool reserve_budget = true);

    const PlanningConfig& config() const { return cfg_; }
    const EnvironmentModel& environment() const { return env_; }
    const InferenceParams& params() const { return params_; }
    const std::vector<std::size_t>& deployed() const { return deployed_; }
    int devices() const { return static_cast<int>(deployed_.size()); }
    bool reserves_budget() const { return reserve_; }

    MultiState initial_state(std::size_t mu0, std::size_t mu1) const;
    bool terminal(const MultiState& s) const { return s.t == cfg_.T + 1; }
    bool available(const MultiState& s, Action a) const;
    bool last_turn(const MultiState& s) const { return s.turn + 1 == devices(); }

    /// Per-location joint errors of the slot given the actions taken so far.
    std::vector<double> location_errors(const MultiState& s) const;
    double slot_error(const MultiState& s) const;
    /// Same map if device `dev` additionally sensed now.
    std::vector<double> location_errors_if_sensing(const MultiState& s, int dev) const;

    /// next_e must be given exactly when this is the last device's turn.
    MultiStepResult step(const MultiState& s, Action a, std::optional<std::size_t> next_e) const;

private:
    std::vector<LastMeasurement> measurements(const MultiState& s, int extra_sensing, std::vector<std::size_t>& sensing) const;

    PlanningConfig cfg_;
    std::vector<std::size_t> deployed_;
    EnvironmentModel env_;
    InferenceParams params_;
    bool reserve_;
};

inline MultiStepResult multi_step(const MultiState& s, Action a, std::optional<std::size_t> next_e,
                                  const MultiDeviceMdp& mdp) {
    return mdp.step(s, a, next_e);
}

/// 1 / (1 + exp(T/E - (T - t)/p)); 1 for a depleted device.
double power_deficiency(int t, int p, int T, int E);

// --- features ---------------------------------------------------------------

/// Segment layout of the 5L + K + 3 feature vector.
struct FeatureLayout {
    int K = 0, L = 0;
    int size() const { return 5 * L + K + 3; }
    int turn_begin() const { return 0; }           // L: one-hot turn
    int power_begin() const { return L; }          // L: remaining sensings
    int sense_begin() const { return 2 * L; }      // K + L + 1: utility of sensing
    int sleep_begin() const { return 3 * L + K + 1; }  // 2L + 1: utility of waiting
    int time_begin() const { return 5 * L + K + 2; }   // 1: remaining slots
};

/// Unscaled features of a state-action pair. Pure.
Eigen::VectorXd feature_vector(const MultiState& s, Action a, const MultiDeviceMdp& mdp);

/// Min-max scaling to [0,1] per feature. The segment of the action not taken
/// stays exactly zero; only the active entries update the statistics.
class FeatureScaler {
public:
    FeatureScaler() = default;
    explicit FeatureScaler(FeatureLayout layout);

    void observe(const Eigen::VectorXd& raw, Action a);
    Eigen::VectorXd apply(const Eigen::VectorXd& raw, Action a) const;

    const FeatureLayout& layout() const { return layout_; }
    Eigen::VectorXd& lower() { return lo_; }
    Eigen::VectorXd& upper() { return hi_; }
    const Eigen::VectorXd& lower() const { return lo_; }
    const Eigen::VectorXd& upper() const { return hi_; }

private:
    bool active(int i, Action a) const;

    FeatureLayout layout_;
    Eigen::VectorXd lo_, hi_;
};

// --- value network ----------------------------------------------------------

/// Layer sizes {5L+K+3, 4K+L, 4K, 3K, 2K, K, 1}.
std::vector<int> q_network_sizes(int K, int L);

struct QNetwork {
    Mlp<double> net;
    FeatureScaler scaler;
    double output_scale = 1.0;  // Q = output_scale * net(scaled features)

    double q(const MultiState& s, Action a, const MultiDeviceMdp& mdp) const;
};

/// Greedy choice among available actions; ties go to Sleep.
Action greedy_action(const QNetwork& q, const MultiState& s, const MultiDeviceMdp& mdp);
/// Uniform choice among available actions.
Action random_action(const MultiDeviceMdp& mdp, const MultiState& s, Rng& rng);
/// Random with probability eps, greedy otherwise.
Action epsilon_greedy_action(const QNetwork& q, const MultiState& s, const MultiDeviceMdp& mdp, double eps, Rng& rng);

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void push(TrainingSample sample);
    std::size_t size() const { return entries_.size(); }
    std::size_t capacity() const { return capacity_; }
    /// min(n, size()) distinct entries, uniformly.
    std::vector<TrainingSample> sample(std::size_t n, Rng& rng) const;

private:
    std::size_t capacity_;
    std::deque<TrainingSample> entries_;
};

struct TrainConfig {
    int episodes = 200;
    int batch = 512;
    double epsilon_start = 0.1;
    double epsilon_end = 0.0;
    double gamma = 1.0;
    double learning_rate = 0.05;
    std::uint64_t seed = 1;
    std::size_t buffer_capacity = 0;  // 0 = 10 * batch
    int steps_per_episode = 1;
    int bootstrap_episodes = 20;      // random-policy episodes seeding the network
    int bootstrap_epochs = 200;
    std::uint64_t eval_seed = 0;      // trajectory for the per-episode rollout log
};

struct TrainLogRow {
    int episode;
    double epsilon;
    double rollout_J_bar;
    double batch_mse;
};

/// Seeds a network on Monte-Carlo returns of random-policy episodes, then
/// runs epsilon-greedy Q-learning with experience replay.
QNetwork q_learning_train(const MultiDeviceMdp& mdp, const TrainConfig& tc, std::vector<TrainLogRow>* log = nullptr);

struct Rollout {
    Schedule schedule;
    double J_bar = 0;
    double reward_sum = 0;
    int snapped_values = 0;
};

using MultiPolicy = std::function<Action(const MultiState&)>;

/// Plays `policy` along a trajectory; unavailable choices are replaced by the
/// forced action.
Rollout rollout(const MultiPolicy& policy, const MultiDeviceMdp& mdp, const Trajectory& mu);
Rollout greedy_rollout(const QNetwork& q, const MultiDeviceMdp& mdp, const Trajectory& mu);
/// Uniform choice among available actions.
Rollout random_rollout(const MultiDeviceMdp& mdp, const Trajectory& mu, std::uint64_t seed);

// --- exact solvers (small instances only) -------------------------------------

/// Optimal V(S_1) of the turn-taking MDP by memoised expectimax.
double solve_turn_taking(const MultiDeviceMdp& mdp, std::size_t mu0, std::size_t mu1);
/// Optimal V(S_1) of the MDP whose action is the joint vector of all devices.
double solve_joint_action(const MultiDeviceMdp& mdp, std::size_t mu0, std::size_t mu1);

}  // namespace aqsense
