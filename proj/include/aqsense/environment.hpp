#pragma once

// Coarse-grained air-quality Markov chain, trace calibration and synthetic
// trace generation.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aqsense/inference.hpp"

namespace aqsense {

using Rng = std::mt19937_64;

/// Sequence of coarse values mu_0 .. mu_T.
using Trajectory = std::vector<double>;

struct EnvironmentModel {
    std::vector<int> values;     // strictly increasing value space
    Eigen::VectorXd stationary;  // P[mu_t = y]
    Eigen::MatrixXd transition;  // transition(i, j) = P[mu_t = y_j | mu_{t-1} = y_i]

    std::size_t size() const { return values.size(); }
    /// Index of the value closest to v (ties go to the lower value).
    std::size_t nearest_index(double v) const;
};

/// Throws DomainError on shape mismatch, non-increasing values or rows that
/// are not stochastic to 1e-9.
void validate(const EnvironmentModel& model);

/// Stationary distribution of a row-stochastic matrix (least-squares solve of
/// pi P = pi with sum(pi) = 1).
Eigen::VectorXd stationary_of(const Eigen::MatrixXd& transition);

/// Chain over `values` whose transition row i is proportional to
/// exp(-(y_j - y_i)^2 / (2 bandwidth^2)); nearby values are more likely.
EnvironmentModel kernel_chain(std::vector<int> values, double bandwidth);

std::vector<std::size_t> sample_state_path(const EnvironmentModel& model, int T, Rng& rng);
/// mu_0 from the stationary distribution, then T transitions. Length T + 1.
Trajectory sample_trajectory(const EnvironmentModel& model, int T, std::uint64_t seed);

struct Reading {
    int t{0};
    int location{0};
    double value{0};
};

struct TraceSet {
    std::vector<Reading> readings;
    std::string slot_length;  // informational, e.g. "10min"

    /// K x T matrix of readings (rows = locations), NaN where missing.
    /// Throws DomainError on duplicate (t, location) or negative ids.
    Eigen::MatrixXd dense() const;
    static TraceSet from_dense(const Eigen::MatrixXd& y);
};

/// Per-slot cross-location mean; NaN for slots without readings.
Eigen::VectorXd slot_means(const Eigen::MatrixXd& y);

EnvironmentModel estimate_chain(const TraceSet& traces);
EnvironmentModel quantize_values(const EnvironmentModel& model, int n_bins);

struct CalibrationThresholds {
    double measurement_min_mu = 1.0;  // slots used only when mu_t exceeds this
    double pairwise_min_mu = 30.0;
};

double calibrate_measurement_variance(const TraceSet& traces, double min_mu = 1.0);
double calibrate_measurement_variance(const Eigen::MatrixXd& y, double min_mu = 1.0);
double calibrate_temporal_variance(const TraceSet& traces);
double calibrate_temporal_variance(const Eigen::MatrixXd& y);

struct PairTables {
    Eigen::MatrixXd mu_pair;
    Eigen::MatrixXd sigma_pair_sq;
};
PairTables calibrate_pairwise(const TraceSet& traces, double min_mu = 30.0);
PairTables calibrate_pairwise(const Eigen::MatrixXd& y, double min_mu = 30.0);

/// All inference parameters from one trace set.
InferenceParams calibrate(const TraceSet& traces, const CalibrationThresholds& thr = {});

// --- synthetic traces -------------------------------------------------------

/// Per-location additive model: y(k,t) = mu_t (1 + offset_k + eps), eps ~ N(0, noise_var_k).
struct LocationModel {
    Eigen::VectorXd offsets;
    Eigen::VectorXd noise_var;

    /// Pair tables implied by the model: mu(i,j) = o_j - o_i, sigma^2(i,j) = s_i + s_j.
    InferenceParams implied_params(double sigma0_sq, double sigma_d_sq) const;
};

/// Offsets in [-0.075, 0.075] and noise variances in [0.0005, 0.05], so the
/// implied pair tables fall inside the ranges observed on real deployments.
LocationModel random_location_model(int K, std::uint64_t seed);

Eigen::MatrixXd location_model_traces(const Trajectory& mu, const LocationModel& model, std::uint64_t seed);

/// L readings per slot scattered around mu_t with relative variance sigma0_sq
/// and cross-location mean exactly mu_t.
Eigen::MatrixXd measurement_noise_traces(const Trajectory& mu, int L, double sigma0_sq, std::uint64_t seed);

/// L independent Gaussian random walks with step variance sigma_d_sq.
Eigen::MatrixXd random_walk_traces(int T, int L, double start, double sigma_d_sq, std::uint64_t seed);

}  // namespace aqsense
