#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "isect/gp_regression.hpp"
#include "isect/traffic_model.hpp"

namespace isect {

// Stream: distances at a grid time are taken from the observation GP as of
// the ingest that first covered it and accumulated per time with the
// marginal (diagonal) variances; never revised afterwards.
// BatchReplay: after every ingest the observation GP is refit on all samples
// and the full-prefix Mahalanobis distance (covariance over all covered grid
// times) is recomputed from scratch.
enum class ClassifierMode { Stream, BatchReplay };

struct ClassifierOptions {
    ClassifierMode mode{ClassifierMode::Stream};
    double variance_floor{1e-6};
    // Search hyperparameters for the observation GP on every ingest (needs 3+
    // samples) instead of using the model's observation prior.
    bool refit_hyperparameters{false};
};

// Targets are ordered: clusters 0..K-1, then the left-center threshold (K),
// then the right-center threshold (K+1).
struct Decision {
    int cluster{kStraight};
    std::vector<double> distances;
    bool excluded_straight{false};
};

// Prefix covariances needed by BatchReplay mode: the floored cluster
// covariances (whose Cholesky factors restrict to any prefix) and, per prefix
// length, the equal-weight Wasserstein barycenters that play the role of the
// thresholds. Depends only on the model, so one instance can be shared by
// many classifier states.
class BatchReplayTargets {
public:
    BatchReplayTargets(const TrafficModel& model, double variance_floor);

    struct PrefixGaussian {
        Eigen::VectorXd mean;
        Eigen::MatrixXd chol;  // lower Cholesky factor of the covariance
    };

    // Gaussian of target `target` in dimension `dim` (0 = x, 1 = y) over the
    // first `prefix` grid times.
    [[nodiscard]] PrefixGaussian prefix(std::size_t target, int dim, std::size_t prefix) const;
    [[nodiscard]] Eigen::MatrixXd prefix_covariance(std::size_t target, int dim, std::size_t prefix) const;
    [[nodiscard]] std::size_t target_count() const noexcept { return n_clusters_ + 2; }

private:
    std::size_t n_clusters_{0};
    // [cluster][dim]
    std::vector<std::array<Eigen::VectorXd, 2>> cluster_mean_;
    std::vector<std::array<Eigen::MatrixXd, 2>> cluster_cov_;
    std::vector<std::array<Eigen::MatrixXd, 2>> cluster_chol_;
    // [side][dim][prefix - 1]
    std::array<std::array<std::vector<GaussianDist>, 2>, 2> threshold_;
    std::array<std::array<std::vector<Eigen::MatrixXd>, 2>, 2> threshold_chol_;
};

struct IngestTiming {
    double refit_seconds{0.0};
    double update_seconds{0.0};
};

// Online state of one tracked vehicle. Not thread-safe; advance each state
// from one thread at a time. The model must outlive the state.
class ClassifierState {
public:
    explicit ClassifierState(const TrafficModel& model, ClassifierOptions options = {},
                             std::shared_ptr<const BatchReplayTargets> batch_targets = nullptr);

    // Appends a sample (timestamps are re-based so the first sample is t = 0),
    // refits the observation GP and folds newly covered grid times into the
    // distances. A sample with the same timestamp as the previous one is
    // ignored; an earlier timestamp throws OutOfOrder.
    void ingest(const Sample& sample);
    void ingest(double timestamp, double x, double y) { ingest(Sample{0, timestamp, {x, y}}); }

    // Needs grid_cursor() >= 1.
    [[nodiscard]] Decision classify() const;

    [[nodiscard]] const RawTrajectory& observations() const noexcept { return observed_; }
    [[nodiscard]] double time_origin() const noexcept { return t0_; }
    [[nodiscard]] std::size_t grid_cursor() const noexcept { return cursor_; }
    [[nodiscard]] const std::vector<double>& cum_sq_dist() const noexcept { return cum_sq_; }
    [[nodiscard]] const std::vector<std::pair<double, int>>& decision_history() const noexcept { return history_; }
    [[nodiscard]] const IngestTiming& last_timing() const noexcept { return timing_; }
    [[nodiscard]] std::size_t target_count() const noexcept { return cum_sq_.size(); }
    // Observation posterior mean (x, y) in the caller's coordinates; needs at
    // least one ingested sample.
    [[nodiscard]] Eigen::Vector2d observed_mean(double t) const;

private:
    void refit();
    void accumulate_stream(std::size_t new_cursor);
    void recompute_batch(std::size_t new_cursor);
    [[nodiscard]] std::pair<Eigen::Vector2d, Eigen::Vector2d> target_marginal(std::size_t target, std::size_t i) const;

    const TrafficModel* model_;
    ClassifierOptions options_;
    std::shared_ptr<const BatchReplayTargets> batch_;
    RawTrajectory observed_;
    double t0_{0.0};
    std::optional<ReconstructedTrajectory> gp_;
    std::size_t cursor_{0};
    std::vector<double> cum_sq_;
    std::vector<std::pair<double, int>> history_;
    IngestTiming timing_;
};

struct ReplayStep {
    double timestamp{0.0};  // as given in the input
    Decision decision;
    IngestTiming timing;
    double classify_seconds{0.0};
};

// Feeds every sample of `trajectory` through a fresh state, recording the
// decision after each ingest that leaves grid_cursor() >= 1.
std::vector<ReplayStep> replay(const RawTrajectory& trajectory, const TrafficModel& model,
                               const ClassifierOptions& options = {},
                               std::shared_ptr<const BatchReplayTargets> batch_targets = nullptr);

// Earliest observation time (relative to the first sample) from which every
// later decision equals `truth`; nullopt if the final decision is wrong.
std::optional<double> classification_time(std::span<const ReplayStep> steps, double time_origin, int truth);
std::optional<double> classification_time(const RawTrajectory& trajectory, const TrafficModel& model, int truth,
                                          const ClassifierOptions& options = {});

}  // namespace isect
