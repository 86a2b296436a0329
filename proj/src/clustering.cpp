#include "isect/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>

#include "isect/error.hpp"

namespace isect {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Uniform in [0, 1) from the top 53 bits; avoids the implementation-defined
// std:: distributions so labels are reproducible across standard libraries.
double unit_draw(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::vector<int> assign(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centers, double& wcss) {
    std::vector<int> labels(static_cast<std::size_t>(x.rows()));
    wcss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_c = 0;
        for (Eigen::Index c = 0; c < centers.rows(); ++c) {
            const double d = (x.row(i) - centers.row(c)).squaredNorm();
            if (d < best) {
                best = d;
                best_c = static_cast<int>(c);
            }
        }
        labels[static_cast<std::size_t>(i)] = best_c;
        wcss += best;
    }
    return labels;
}

std::optional<Eigen::MatrixXd> cluster_means(const Eigen::MatrixXd& x, const std::vector<int>& labels, int k) {
    Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(k, x.cols());
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int c = labels[static_cast<std::size_t>(i)];
        centers.row(c) += x.row(i);
        ++counts[static_cast<std::size_t>(c)];
    }
    for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0) return std::nullopt;
        centers.row(c) /= static_cast<double>(counts[static_cast<std::size_t>(c)]);
    }
    return centers;
}

Eigen::MatrixXd seed_centers(const Eigen::MatrixXd& x, int k, std::mt19937_64& rng) {
    const auto n = x.rows();
    Eigen::MatrixXd centers(k, x.cols());
    auto first = static_cast<Eigen::Index>(unit_draw(rng) * static_cast<double>(n));
    centers.row(0) = x.row(std::min(first, n - 1));

    Eigen::VectorXd nearest(n);
    for (Eigen::Index i = 0; i < n; ++i) nearest[i] = (x.row(i) - centers.row(0)).squaredNorm();

    for (int c = 1; c < k; ++c) {
        const double total = nearest.sum();
        Eigen::Index pick = n - 1;
        if (total > 0.0) {
            const double target = unit_draw(rng) * total;
            double cum = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) {
                cum += nearest[i];
                if (cum > target && nearest[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = std::min(static_cast<Eigen::Index>(unit_draw(rng) * static_cast<double>(n)), n - 1);
        }
        centers.row(c) = x.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            nearest[i] = std::min(nearest[i], (x.row(i) - centers.row(c)).squaredNorm());
    }
    return centers;
}

std::optional<ClusterLabeling> lloyd(const Eigen::MatrixXd& x, int k, Eigen::MatrixXd centers, int max_iterations) {
    ClusterLabeling out;
    out.k = k;
    double wcss = 0.0;
    out.labels = assign(x, centers, wcss);
    out.wcss_history.push_back(wcss);
    for (int iter = 0; iter < max_iterations; ++iter) {
        auto means = cluster_means(x, out.labels, k);
        if (!means) return std::nullopt;
        centers = std::move(*means);
        auto next = assign(x, centers, wcss);
        out.wcss_history.push_back(wcss);
        if (next == out.labels) break;
        out.labels = std::move(next);
    }
    auto means = cluster_means(x, out.labels, k);
    if (!means) return std::nullopt;
    out.centers = std::move(*means);
    out.wcss = 0.0;
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        out.wcss += (x.row(i) - out.centers.row(out.labels[static_cast<std::size_t>(i)])).squaredNorm();
    return out;
}

}  // namespace

std::vector<std::size_t> ClusterLabeling::cluster_sizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(std::max(k, 0)), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
}

Eigen::MatrixXd endpoint_features(const TrajectorySet& set, double t_start, double t_end) {
    if (!(t_start < t_end) || t_start < 0.0)
        throw Error(ErrorKind::Precondition, "endpoint features need 0 <= t_start < t_end");
    Eigen::MatrixXd features(static_cast<Eigen::Index>(set.size()), 4);
    for (std::size_t j = 0; j < set.size(); ++j) {
        const auto a = set[j].mean(t_start);
        const auto b = set[j].mean(t_end);
        features.row(static_cast<Eigen::Index>(j)) << a.x(), a.y(), b.x(), b.y();
    }
    return features;
}

ClusterLabeling kmeans_pp(const Eigen::MatrixXd& features, int k, std::uint64_t seed, const KMeansOptions& options) {
    if (k < 1) throw Error(ErrorKind::Precondition, "k-means needs k >= 1");
    if (features.rows() < k)
        throw Error(ErrorKind::Precondition, "k-means needs at least k = " + std::to_string(k) + " points, got " +
                                                 std::to_string(features.rows()));
    if (!features.allFinite()) throw Error(ErrorKind::Domain, "k-means features must be finite");

    std::optional<ClusterLabeling> best;
    int successes = 0;
    const int max_attempts = std::max(1, options.restarts) * 5;
    for (int attempt = 0; attempt < max_attempts && successes < std::max(1, options.restarts); ++attempt) {
        std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(attempt) + 1)));
        auto run = lloyd(features, k, seed_centers(features, k, rng), options.max_iterations);
        if (!run) continue;
        ++successes;
        if (!best || run->wcss < best->wcss) best = std::move(run);
    }
    if (!best) throw Error(ErrorKind::DegenerateClustering, "every k-means restart produced an empty cluster");
    return *best;
}

ClusterLabeling canonicalize_labels(const ClusterLabeling& labeling, const Eigen::MatrixXd& features) {
    if (features.cols() != 4) throw Error(ErrorKind::DimensionMismatch, "canonicalization expects 4 endpoint features");
    if (static_cast<std::size_t>(features.rows()) != labeling.labels.size())
        throw Error(ErrorKind::DimensionMismatch, "one label per feature row expected");
    const int k = labeling.k;
    if (k <= 1) return labeling;

    Eigen::MatrixXd centroid = Eigen::MatrixXd::Zero(k, 4);
    std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
    for (Eigen::Index i = 0; i < features.rows(); ++i) {
        const int c = labeling.labels[static_cast<std::size_t>(i)];
        if (c < 0 || c >= k) throw Error(ErrorKind::Precondition, "label out of range");
        centroid.row(c) += features.row(i);
        counts[static_cast<std::size_t>(c)] += 1.0;
    }
    std::vector<Eigen::Vector2d> disp(static_cast<std::size_t>(k));
    Eigen::Vector2d heading = Eigen::Vector2d::Zero();
    for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] == 0.0)
            throw Error(ErrorKind::DegenerateClustering, "cluster " + std::to_string(c) + " is empty");
        centroid.row(c) /= counts[static_cast<std::size_t>(c)];
        disp[static_cast<std::size_t>(c)] = {centroid(c, 2) - centroid(c, 0), centroid(c, 3) - centroid(c, 1)};
        const double norm = disp[static_cast<std::size_t>(c)].norm();
        if (norm > 0.0) heading += disp[static_cast<std::size_t>(c)] / norm;
    }
    if (heading.norm() == 0.0) heading = Eigen::Vector2d::UnitX();

    std::vector<double> angle(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        const auto& d = disp[static_cast<std::size_t>(c)];
        angle[static_cast<std::size_t>(c)] = std::atan2(heading.x() * d.y() - heading.y() * d.x(), heading.dot(d));
    }

    std::vector<int> order(static_cast<std::size_t>(k));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        const double da = angle[static_cast<std::size_t>(a)];
        const double db = angle[static_cast<std::size_t>(b)];
        if (std::abs(da - db) > 1e-12) return da < db;
        return centroid(a, 2) > centroid(b, 2);
    });

    // order[0] -> 0, order.back() -> 1, the middle ones -> 2, 3, ...
    std::vector<int> new_index(static_cast<std::size_t>(k));
    new_index[static_cast<std::size_t>(order.front())] = 0;
    new_index[static_cast<std::size_t>(order.back())] = 1;
    for (int r = 1; r + 1 < k; ++r) new_index[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])] = r + 1;

    ClusterLabeling out = labeling;
    for (auto& l : out.labels) l = new_index[static_cast<std::size_t>(l)];
    if (labeling.centers.rows() == k)
        for (int c = 0; c < k; ++c) out.centers.row(new_index[static_cast<std::size_t>(c)]) = labeling.centers.row(c);
    return out;
}

}  // namespace isect
