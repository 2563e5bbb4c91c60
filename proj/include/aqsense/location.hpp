#pragma once

// Deployment-location selection: pairwise difference matrix, Euclidean
// embedding, k-means seeding and a genetic search over K-bit genes.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "aqsense/environment.hpp"
#include "aqsense/inference.hpp"
#include "aqsense/schedule.hpp"

namespace aqsense {

struct DifferenceMatrix {
    Eigen::MatrixXd theta;
    double delta_applied = 0;  // offset added to every off-diagonal entry
};

/// theta = sqrt(mu^2 + sigma^2) per pair, then shifted by the largest
/// triangle violation so that it is a metric.
DifferenceMatrix difference_matrix(const InferenceParams& params);

/// Largest theta(i,j) - theta(i,k) - theta(k,j) over distinct triples; <= 0 for a metric.
double max_triangle_violation(const Eigen::MatrixXd& theta);

struct Embedding {
    Eigen::MatrixXd coords;  // K x (K - 1), one row per location
    double residual = 0;     // max |reconstructed distance - theta|
};

/// Places the locations one at a time: the first at the origin, each next one
/// solving its distance equations to those already placed.
Embedding embed(const DifferenceMatrix& theta);
Embedding embed(const Eigen::MatrixXd& theta);

struct Clustering {
    std::vector<std::vector<std::size_t>> clusters;  // L nonempty groups, ascending ids
    std::vector<int> assignment;                     // cluster per point
    std::vector<double> wcss;                        // objective after each Lloyd iteration
};

/// Lloyd iteration from a seeded farthest-point start; at most 100 iterations.
Clustering kmeans_cluster(const Embedding& emb, int L, std::uint64_t seed);
Clustering kmeans_cluster(const Eigen::MatrixXd& points, int L, std::uint64_t seed);

struct Gene {
    std::vector<std::uint8_t> bits;
    std::optional<double> fitness;  // J-bar, lower is better

    int popcount() const;
    std::vector<std::size_t> locations() const;
    static Gene from_locations(int K, const std::vector<std::size_t>& locations);
    friend bool operator==(const Gene& a, const Gene& b) { return a.bits == b.bits; }
};

using GenePool = std::vector<Gene>;

struct GAConfig {
    int H = 40;        // pool size (also the initial size)
    int H1 = 4;        // elites kept
    int H2 = 36;       // sampled by weight
    int M = 3;         // mutated copies per gene
    double p_m = 0.1;  // per-bit flip probability
    int W = 25;        // max rounds
    int stall = 6;     // rounds without improvement before stopping
};

/// Throws ValidationError naming the first violated constraint.
void validate(const GAConfig& cfg);

/// C genes, each with one location drawn uniformly from every cluster.
GenePool initial_pool(const Clustering& clusters, int K, int C, std::uint64_t seed);
/// C genes, each a uniformly random L-subset of the K locations.
GenePool random_pool(int K, int L, int C, std::uint64_t seed);

std::vector<Gene> mutate(const Gene& g, const GAConfig& cfg, Rng& rng);
/// Children keep bits [0, pos) of their own parent and swap bits [pos, K).
std::pair<Gene, Gene> recombine_at(const Gene& g1, const Gene& g2, std::size_t pos);
/// pos uniform in [1, K - 1].
std::pair<Gene, Gene> recombine(const Gene& g1, const Gene& g2, Rng& rng);

/// Drops duplicates, empty genes and genes with more than L ones, keeps the H1
/// fittest and samples H2 more with weight max(J) - J. Throws
/// DegenerateInputError if nothing survives the filter.
GenePool select(const GenePool& pool, const GAConfig& cfg, int L, Rng& rng);

using GeneEvaluator = std::function<double(const Gene&)>;

struct EvolveResult {
    Gene best;
    std::vector<double> history;  // best fitness after round 0 (initial pool), 1, ...
    GenePool pool;
    int rounds = 0;
};

EvolveResult evolve(const GenePool& initial, const GAConfig& cfg, int L, const GeneEvaluator& evaluator,
                    std::uint64_t seed);

/// Fitness under a fixed power control: the i-th selected location (ascending)
/// follows row i of `power` (rows x (T+1)). Throws ValidationError for genes
/// with more ones than `power` has rows.
GeneEvaluator make_schedule_evaluator(PhiMatrix power, Trajectory mu, InferenceParams params);

struct SelectionResult {
    DifferenceMatrix difference;
    Embedding embedding;
    Clustering clustering;
    EvolveResult evolution;
};

/// Full pipeline: difference matrix, embedding, clustering, clustered pool, GA.
SelectionResult select_locations(const InferenceParams& params, int L, const GAConfig& cfg,
                                 const GeneEvaluator& evaluator, std::uint64_t seed);

}  // namespace aqsense
