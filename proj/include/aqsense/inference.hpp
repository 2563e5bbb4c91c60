#pragma once

// Gaussian measurement / temporal / spatial inference and multi-source fusion.
//
// Every quantity here is a Gaussian belief N(mean, variance) about the
// pollutant value at one location and one slot. Pair statistics are stored
// normalized by the coarse-grained average mu_t and rescaled on use.

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aqsense/errors.hpp"

namespace aqsense {

template <typename Scalar>
struct Estimate {
    Scalar mean{0};
    Scalar variance{0};

    friend bool operator==(const Estimate&, const Estimate&) = default;
};

template <typename Scalar>
struct BasicInferenceParams {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Scalar sigma0_sq{0};   // normalized measurement variance
    Scalar sigma_d_sq{0};  // per-slot temporal deviation variance
    Matrix mu_pair;        // mu_pair(k, k') : normalized mean shift k -> k'
    Matrix sigma_pair_sq;  // sigma_pair_sq(k, k') : normalized added variance

    Eigen::Index locations() const { return mu_pair.rows(); }
};

using InferenceParams = BasicInferenceParams<double>;

/// Most recent measurement held by one deployed device.
template <typename Scalar>
struct BasicLastMeasurement {
    std::size_t location{0};
    int age{0};  // slots since the measurement
    Scalar recorded_mean{0};
    Scalar recorded_variance{0};
};

using LastMeasurement = BasicLastMeasurement<double>;

template <typename Scalar>
struct MapCell {
    Estimate<Scalar> estimate;
    Scalar joint_error{0};
    bool measured{false};
};

/// Throws DomainError unless the pair tables are square, zero on the
/// diagonal, antisymmetric (mu) and symmetric non-negative (sigma).
template <typename Scalar>
void validate(const BasicInferenceParams<Scalar>& p, Scalar tol = Scalar(1e-12)) {
    if (p.sigma0_sq < 0 || p.sigma_d_sq < 0 || !std::isfinite(p.sigma0_sq) || !std::isfinite(p.sigma_d_sq))
        throw DomainError("inference params: variances must be finite and >= 0");
    const auto k = p.mu_pair.rows();
    if (p.mu_pair.cols() != k || p.sigma_pair_sq.rows() != k || p.sigma_pair_sq.cols() != k)
        throw DomainError("inference params: pair tables must both be K x K");
    for (Eigen::Index i = 0; i < k; ++i) {
        if (std::abs(p.mu_pair(i, i)) > tol || std::abs(p.sigma_pair_sq(i, i)) > tol)
            throw DomainError("inference params: pair tables need a zero diagonal");
        for (Eigen::Index j = 0; j < k; ++j) {
            if (std::abs(p.mu_pair(i, j) + p.mu_pair(j, i)) > tol)
                throw DomainError("inference params: mu_pair must be antisymmetric");
            if (std::abs(p.sigma_pair_sq(i, j) - p.sigma_pair_sq(j, i)) > tol)
                throw DomainError("inference params: sigma_pair_sq must be symmetric");
            if (p.sigma_pair_sq(i, j) < 0)
                throw DomainError("inference params: sigma_pair_sq must be >= 0");
        }
    }
}

/// A direct reading at coarse value mu_t: N(mu_t, mu_t^2 sigma0^2).
template <typename Scalar>
Estimate<Scalar> measurement_estimate(Scalar mu_t, const BasicInferenceParams<Scalar>& p) {
    if (!(mu_t >= 0)) throw DomainError("measurement_estimate: mu_t must be >= 0");
    return {mu_t, mu_t * mu_t * p.sigma0_sq};
}

/// Carry an estimate forward tau slots; each slot adds sigma_d^2.
template <typename Scalar>
Estimate<Scalar> temporal_extend(const Estimate<Scalar>& est, int tau, const BasicInferenceParams<Scalar>& p) {
    if (tau < 0) throw DomainError("temporal_extend: tau must be >= 0");
    return {est.mean, est.variance + Scalar(tau) * p.sigma_d_sq};
}

/// Move an estimate from location `from` to location `to` at coarse value mu_t.
template <typename Scalar>
Estimate<Scalar> spatial_shift(const Estimate<Scalar>& est, Scalar mu_t, std::size_t from, std::size_t to,
                               const BasicInferenceParams<Scalar>& p) {
    const auto k = static_cast<std::size_t>(p.locations());
    if (from >= k || to >= k) throw DomainError("spatial_shift: location index out of range");
    const auto i = static_cast<Eigen::Index>(from);
    const auto j = static_cast<Eigen::Index>(to);
    return {est.mean + mu_t * p.mu_pair(i, j), est.variance + mu_t * mu_t * p.sigma_pair_sq(i, j)};
}

/// Precision-weighted product of independent Gaussian estimates.
template <typename Scalar>
Estimate<Scalar> fuse(std::span<const Estimate<Scalar>> estimates) {
    if (estimates.empty()) throw DomainError("fuse: empty estimate list");
    Scalar precision{0};
    Scalar weighted{0};
    for (const auto& e : estimates) {
        if (!(e.variance > 0)) throw DegenerateInputError("fuse: component variance must be > 0");
        precision += Scalar(1) / e.variance;
        weighted += e.mean / e.variance;
    }
    const Scalar variance = Scalar(1) / precision;
    return {weighted * variance, variance};
}

template <typename Scalar>
Estimate<Scalar> fuse(const std::vector<Estimate<Scalar>>& estimates) {
    return fuse(std::span<const Estimate<Scalar>>(estimates));
}

/// sqrt(variance + (mean - mu_t)^2)
template <typename Scalar>
Scalar joint_error(const Estimate<Scalar>& est, Scalar mu_t) {
    const Scalar dev = est.mean - mu_t;
    return std::sqrt(est.variance + dev * dev);
}

/// Real-time map at one slot. Locations hosting a device that senses now are
/// measured directly (zero deviation); every other location fuses one
/// temporal+spatial intermediate per deployed device.
///
/// `sensing_now` holds indices into `last`.
template <typename Scalar>
std::vector<MapCell<Scalar>> infer_map(std::span<const BasicLastMeasurement<Scalar>> last, Scalar mu_t,
                                       const BasicInferenceParams<Scalar>& p,
                                       std::span<const std::size_t> sensing_now) {
    if (last.empty()) throw DomainError("infer_map: no deployed devices");
    const auto k = static_cast<std::size_t>(p.locations());
    std::vector<char> measured(k, 0);
    for (auto dev : sensing_now) {
        if (dev >= last.size()) throw DomainError("infer_map: sensing device index out of range");
        measured.at(last[dev].location) = 1;
    }

    std::vector<MapCell<Scalar>> cells(k);
    std::vector<Estimate<Scalar>> parts(last.size());
    for (std::size_t target = 0; target < k; ++target) {
        auto& cell = cells[target];
        if (measured[target]) {
            cell.estimate = measurement_estimate(mu_t, p);
            cell.joint_error = std::sqrt(cell.estimate.variance);
            cell.measured = true;
            continue;
        }
        for (std::size_t i = 0; i < last.size(); ++i) {
            const auto& m = last[i];
            const auto carried = temporal_extend(Estimate<Scalar>{m.recorded_mean, m.recorded_variance}, m.age, p);
            parts[i] = spatial_shift(carried, mu_t, m.location, target, p);
        }
        cell.estimate = fuse(std::span<const Estimate<Scalar>>(parts));
        cell.joint_error = joint_error(cell.estimate, mu_t);
    }
    return cells;
}

template <typename Scalar>
std::vector<MapCell<Scalar>> infer_map(const std::vector<BasicLastMeasurement<Scalar>>& last, Scalar mu_t,
                                       const BasicInferenceParams<Scalar>& p,
                                       const std::vector<std::size_t>& sensing_now) {
    return infer_map(std::span<const BasicLastMeasurement<Scalar>>(last), mu_t, p,
                     std::span<const std::size_t>(sensing_now));
}

/// Sum of joint errors over every location of an inferred map.
template <typename Scalar>
Scalar total_joint_error(const std::vector<MapCell<Scalar>>& cells) {
    Scalar s{0};
    for (const auto& c : cells) s += c.joint_error;
    return s;
}

}  // namespace aqsense
