#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "isect/gp_regression.hpp"

namespace isect {

// Canonical cluster indices for a one-source, three-destination intersection.
inline constexpr int kRightTurn = 0;
inline constexpr int kLeftTurn = 1;
inline constexpr int kStraight = 2;

struct ClusterLabeling {
    std::vector<int> labels;   // one per row of the feature matrix
    Eigen::MatrixXd centers;   // k x d
    int k{0};
    double wcss{0.0};
    // Within-cluster sum of squares after each Lloyd assignment of the
    // winning restart.
    std::vector<double> wcss_history;

    [[nodiscard]] std::vector<std::size_t> cluster_sizes() const;
};

// Row j = (x_j(t_start), y_j(t_start), x_j(t_end), y_j(t_end)) of the
// reconstructed means.
Eigen::MatrixXd endpoint_features(const TrajectorySet& set, double t_start = 0.0, double t_end = 3.0);

struct KMeansOptions {
    int restarts{10};
    int max_iterations{100};
};

// k-means++ seeding followed by Lloyd iterations, best of `restarts` runs by
// within-cluster sum of squares (ties go to the earlier restart). Restart r
// uses an RNG seeded from (seed, r), so the result depends only on the input
// and the seed. Runs that end with an empty cluster are discarded.
ClusterLabeling kmeans_pp(const Eigen::MatrixXd& features, int k, std::uint64_t seed, const KMeansOptions& options = {});

// Reorders clusters by the signed angle of their centroid displacement
// (initial -> terminal position) around the mean heading: most clockwise gets
// index 0 (right turn), most counter-clockwise index 1 (left turn), the rest
// follow in increasing angle (straight = 2 when k = 3). Ties in angle are
// broken by the larger terminal x first.
ClusterLabeling canonicalize_labels(const ClusterLabeling& labeling, const Eigen::MatrixXd& features);

}  // namespace isect
