#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aqsense/environment.hpp"
#include "aqsense/inference.hpp"

namespace aqsense {

struct PlanningConfig {
    int K = 0;        // candidate locations
    int L = 0;        // device budget
    int T = 0;        // horizon, slots 1..T (slot 0 is the free initial sensing)
    int E = 0;        // sensings per device over slots 1..T
    int delta_T = 0;  // max consecutive sleeping slots
};

/// Names of violated planning constraints (L < K, E < T, delta_T * E > T,
/// positivity). Empty when the configuration is admissible.
std::vector<std::string> planning_violations(const PlanningConfig& cfg);
/// Throws ValidationError naming the first violated constraint.
void require_valid(const PlanningConfig& cfg);

using PhiMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;

/// K x (T+1) 0-1 sensing matrix plus the ordered list of deployed locations.
/// Device i sits at deployed[i].
struct Schedule {
    PhiMatrix phi;
    std::vector<std::size_t> deployed;

    int locations() const { return static_cast<int>(phi.rows()); }
    int horizon() const { return static_cast<int>(phi.cols()) - 1; }

    /// All-zero schedule except the mandatory sensing at t = 0.
    static Schedule initial(int K, int T, std::vector<std::size_t> deployed);
};

enum class ViolationKind {
    Energy,              // more than E sensings in slots 1..T
    SleepWindow,         // delta_T + 1 consecutive silent slots
    UndeployedSensing,   // phi = 1 at a location without a device
    MissingInitial,      // deployed device not sensing at t = 0
    DeviceBudget,        // more than L deployed locations, or duplicates
};

struct Violation {
    ViolationKind kind;
    int location;
    int slot;  // offending slot (window start for SleepWindow), -1 if not slot-specific
};

std::string to_string(ViolationKind kind);

/// Every violated constraint; empty means feasible. Throws DomainError when
/// the matrix shape does not match cfg.
std::vector<Violation> validate_schedule(const Schedule& s, const PlanningConfig& cfg);

struct Evaluation {
    double J_bar = 0;
    std::vector<double> per_slot;  // average joint error over the K locations, slots 1..T
};

/// Average joint error of the real-time map over slots 1..T.
/// This overload checks only structural consistency (deployment set, t = 0 sensing).
Evaluation evaluate_schedule(const Schedule& s, const Trajectory& mu, const InferenceParams& params);
/// Rejects any schedule that validate_schedule flags.
Evaluation evaluate_schedule(const Schedule& s, const Trajectory& mu, const InferenceParams& params,
                             const PlanningConfig& cfg);

/// Each device senses at t = 0 and then every floor(T/E) slots, at most E times in 1..T.
Schedule uniform_schedule(const PlanningConfig& cfg, const std::vector<std::size_t>& deployed);

}  // namespace aqsense
