#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "isect/trajectory_data.hpp"

namespace isect {

// Integrated Brownian motion ("Wiener velocity") covariance
//   K(t, s) = theta * (min(t,s)^3 / 3 + |t - s| * min(t,s)^2 / 2),  t, s >= 0.
// Non-stationary; the prior is pinned to zero value and zero slope at t = 0
// and the posterior mean extrapolates linearly past the last observation.
class WienerVelocityKernel {
public:
    explicit WienerVelocityKernel(double theta = 1.0);

    [[nodiscard]] double theta() const noexcept { return theta_; }

    // Throws Domain for negative (or NaN) times.
    [[nodiscard]] double operator()(double t, double s) const;

    // theta = 1, unchecked.
    [[nodiscard]] static double unit(double t, double s) noexcept;

private:
    double theta_;
};

Eigen::MatrixXd gram_matrix(const WienerVelocityKernel& kernel, std::span<const double> times);

struct JitterPolicy {
    double initial{1e-10};
    double max{1e-4};
    double factor{10.0};
};

// Zero-mean GP conditioned on noisy scalar observations. Immutable once built,
// so a posterior can be shared between threads.
class GpPosterior {
public:
    // Prior of the unit kernel.
    GpPosterior() = default;

    // Factorizes K(T,T) + noise_var * I, adding diagonal jitter from
    // policy.initial up to policy.max when the plain factorization fails.
    // Throws IllConditionedKernel if even the largest jitter does not help.
    static GpPosterior fit(std::span<const double> times, std::span<const double> values,
                           const WienerVelocityKernel& kernel, double noise_var,
                           const JitterPolicy& policy = {});

    // No observations: mean 0, variance K(t,t).
    static GpPosterior prior(const WienerVelocityKernel& kernel);

    [[nodiscard]] double mean(double t) const;
    [[nodiscard]] double variance(double t) const;
    [[nodiscard]] Eigen::VectorXd mean(std::span<const double> ts) const;

    [[nodiscard]] bool has_data() const noexcept { return times_.size() > 0; }
    [[nodiscard]] const WienerVelocityKernel& kernel() const noexcept { return kernel_; }
    [[nodiscard]] double noise_variance() const noexcept { return noise_var_; }
    [[nodiscard]] double jitter() const noexcept { return jitter_; }
    [[nodiscard]] const Eigen::VectorXd& train_times() const noexcept { return times_; }
    [[nodiscard]] const Eigen::VectorXd& train_values() const noexcept { return values_; }
    [[nodiscard]] const Eigen::VectorXd& weights() const noexcept { return weights_; }
    [[nodiscard]] Eigen::MatrixXd cholesky_factor() const { return llt_.matrixL(); }

private:
    [[nodiscard]] Eigen::VectorXd cross_covariance(double t) const;

    WienerVelocityKernel kernel_{};
    double noise_var_{0.0};
    double jitter_{0.0};
    Eigen::VectorXd times_;
    Eigen::VectorXd values_;
    Eigen::VectorXd weights_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

// Writes `t,mean,variance` rows for the requested times.
void write_posterior_csv(std::ostream& out, const GpPosterior& posterior, std::span<const double> times);

struct Hyperparameters {
    double theta{1.0};
    double noise_var{1e-2};
};

struct HyperSearch {
    double theta_min{1e-3};
    double theta_max{1e3};
    double noise_min{1e-6};
    double noise_max{1.0};
    int grid_points{16};
    int refinements{3};
};

// log p(Z | T, theta, noise_var); nullopt when K + noise_var*I is not
// numerically positive definite.
std::optional<double> log_marginal_likelihood(std::span<const double> times, std::span<const double> values,
                                              const Hyperparameters& hyper);

struct HyperFit {
    Hyperparameters hyper;
    double log_marginal{0.0};
};

// Log-spaced grid over (theta, noise_var) followed by coordinate refinement
// with the step halved `refinements` times. Deterministic.
HyperFit optimize_hyperparameters(std::span<const double> times, std::span<const double> values,
                                  const HyperSearch& search = {});

struct ReconstructOptions {
    HyperSearch search{};
    // When set, skip the search for that dimension.
    std::optional<Hyperparameters> fixed_x;
    std::optional<Hyperparameters> fixed_y;
    // Samples used for the line fit that anchors position and velocity at t = 0.
    std::size_t anchor_window{5};
};

// Prior mean of one dimension: intercept + slope * t.
struct AnchorLine {
    double intercept{0.0};
    double slope{0.0};

    [[nodiscard]] double operator()(double t) const { return intercept + slope * t; }
};

// Least-squares line through the first `window` samples; a constant when
// only one sample is available.
AnchorLine fit_anchor(std::span<const double> times, std::span<const double> values, std::size_t window);

// Per-dimension posterior of one vehicle track. Each dimension is modelled as
// anchor line + GP: the kernel pins position and velocity to zero at t = 0,
// so the line supplies both, and the GP models the deviation from it.
struct ReconstructedTrajectory {
    TrajectoryId id{0};
    bool extrapolated{false};
    AnchorLine anchor_x;
    AnchorLine anchor_y;
    GpPosterior gp_x;
    GpPosterior gp_y;

    [[nodiscard]] double mean_x(double t) const { return anchor_x(t) + gp_x.mean(t); }
    [[nodiscard]] double mean_y(double t) const { return anchor_y(t) + gp_y.mean(t); }
    [[nodiscard]] Eigen::Vector2d mean(double t) const { return {mean_x(t), mean_y(t)}; }
    [[nodiscard]] Eigen::Vector2d variance(double t) const { return {gp_x.variance(t), gp_y.variance(t)}; }
    [[nodiscard]] Hyperparameters hyper_x() const { return {gp_x.kernel().theta(), gp_x.noise_variance()}; }
    [[nodiscard]] Hyperparameters hyper_y() const { return {gp_y.kernel().theta(), gp_y.noise_variance()}; }
};

// Errors are rethrown with the trajectory id prepended and the kind kept.
ReconstructedTrajectory reconstruct(const RawTrajectory& traj, const ReconstructOptions& options = {});

// The continuous trajectory set: one reconstruction per input track.
class TrajectorySet {
public:
    TrajectorySet() = default;
    explicit TrajectorySet(std::vector<ReconstructedTrajectory> members);

    [[nodiscard]] std::size_t size() const noexcept { return members_.size(); }
    [[nodiscard]] bool empty() const noexcept { return members_.empty(); }
    [[nodiscard]] const std::vector<ReconstructedTrajectory>& members() const noexcept { return members_; }
    [[nodiscard]] const ReconstructedTrajectory& operator[](std::size_t i) const { return members_[i]; }

    struct Evaluation {
        Eigen::MatrixXd x;  // J x N
        Eigen::MatrixXd y;  // J x N
    };
    [[nodiscard]] Evaluation evaluate(std::span<const double> times) const;

private:
    std::vector<ReconstructedTrajectory> members_;
};

// Reconstructs every track, in parallel when threads != 1 (0 = default).
// Failures are collected and reported together as one Aggregate error.
TrajectorySet build_trajectory_set(std::span<const RawTrajectory> trajectories,
                                   const ReconstructOptions& options = {}, std::size_t threads = 0);

}  // namespace isect
