#include "isect/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "isect/error.hpp"

namespace isect {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

Eigen::MatrixXd floored(Eigen::MatrixXd cov, double floor) {
    cov.diagonal().array() += floor;
    return cov;
}

Eigen::MatrixXd lower_cholesky(const Eigen::MatrixXd& cov) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() == Eigen::Success) return llt.matrixL();
    const double scale = std::max(cov.diagonal().maxCoeff(), 1.0);
    for (double eps = 1e-12; eps <= 1e-4; eps *= 10.0) {
        Eigen::MatrixXd jittered = cov;
        jittered.diagonal().array() += eps * scale;
        llt.compute(jittered);
        if (llt.info() == Eigen::Success) return llt.matrixL();
    }
    throw Error(ErrorKind::SingularCovariance, "prefix covariance is not positive definite");
}

}  // namespace

BatchReplayTargets::BatchReplayTargets(const TrafficModel& model, double variance_floor)
    : n_clusters_(model.intended.size()) {
    if (n_clusters_ < 3) throw Error(ErrorKind::Precondition, "batch replay needs a model with k >= 3");
    for (const auto& it : model.intended) {
        std::array<Eigen::MatrixXd, 2> cov{floored(it.cov_x, variance_floor), floored(it.cov_y, variance_floor)};
        cluster_mean_.push_back({it.mean_x, it.mean_y});
        cluster_chol_.push_back({lower_cholesky(cov[0]), lower_cholesky(cov[1])});
        cluster_cov_.push_back(std::move(cov));
    }

    const std::size_t n = model.grid.size();
    const std::array<int, 2> turn_of_side{kLeftTurn, kRightTurn};
    for (std::size_t side = 0; side < 2; ++side) {
        const auto turn = static_cast<std::size_t>(turn_of_side[side]);
        for (int dim = 0; dim < 2; ++dim) {
            auto& dists = threshold_[side][static_cast<std::size_t>(dim)];
            auto& chols = threshold_chol_[side][static_cast<std::size_t>(dim)];
            for (std::size_t p = 1; p <= n; ++p) {
                const auto len = static_cast<Eigen::Index>(p);
                // Equal-weight barycenter of the pair in closed form.
                const GaussianDist turn_prefix{cluster_mean_[turn][static_cast<std::size_t>(dim)].head(len),
                                               cluster_cov_[turn][static_cast<std::size_t>(dim)].topLeftCorner(len, len)};
                const GaussianDist straight_prefix{
                    cluster_mean_[kStraight][static_cast<std::size_t>(dim)].head(len),
                    cluster_cov_[kStraight][static_cast<std::size_t>(dim)].topLeftCorner(len, len)};
                auto bary = wasserstein_geodesic(turn_prefix, straight_prefix, 0.5);
                chols.push_back(lower_cholesky(bary.cov));
                dists.push_back(std::move(bary));
            }
        }
    }
}

Eigen::MatrixXd BatchReplayTargets::prefix_covariance(std::size_t target, int dim, std::size_t prefix) const {
    const auto d = static_cast<std::size_t>(dim);
    const auto len = static_cast<Eigen::Index>(prefix);
    if (target < n_clusters_) return cluster_cov_[target][d].topLeftCorner(len, len);
    return threshold_[target - n_clusters_][d][prefix - 1].cov;
}

BatchReplayTargets::PrefixGaussian BatchReplayTargets::prefix(std::size_t target, int dim, std::size_t prefix) const {
    if (target >= target_count() || prefix == 0 || dim < 0 || dim > 1)
        throw Error(ErrorKind::Range, "batch replay target out of range");
    const auto d = static_cast<std::size_t>(dim);
    const auto len = static_cast<Eigen::Index>(prefix);
    if (target < n_clusters_)
        return {cluster_mean_[target][d].head(len), cluster_chol_[target][d].topLeftCorner(len, len)};
    const auto side = target - n_clusters_;
    return {threshold_[side][d][prefix - 1].mean, threshold_chol_[side][d][prefix - 1]};
}

ClassifierState::ClassifierState(const TrafficModel& model, ClassifierOptions options,
                                 std::shared_ptr<const BatchReplayTargets> batch_targets)
    : model_(&model), options_(options), batch_(std::move(batch_targets)) {
    if (model.k() < 3) throw Error(ErrorKind::Precondition, "classifier needs a model with k >= 3");
    if (options_.mode == ClassifierMode::BatchReplay && !batch_)
        batch_ = std::make_shared<BatchReplayTargets>(model, options_.variance_floor);
    cum_sq_.assign(static_cast<std::size_t>(model.k()) + 2, 0.0);
}

void ClassifierState::ingest(const Sample& sample) {
    if (!std::isfinite(sample.timestamp) || !sample.position.allFinite())
        throw Error(ErrorKind::Domain, "classifier: non-finite sample");
    if (observed_.empty()) {
        t0_ = sample.timestamp;
        observed_.id = sample.trajectory_id;
    }
    const double t = sample.timestamp - t0_;
    if (!observed_.empty()) {
        if (t < observed_.times.back())
            throw Error(ErrorKind::OutOfOrder, "classifier: timestamp " + std::to_string(sample.timestamp) +
                                                   " precedes the previous sample");
        if (t == observed_.times.back()) return;
    }
    observed_.push_back(t, sample.position.x(), sample.position.y());

    auto start = Clock::now();
    refit();
    timing_.refit_seconds = seconds_since(start);

    start = Clock::now();
    const std::size_t new_cursor = std::min(model_->grid.size(), model_->grid.covered_count(t));
    if (options_.mode == ClassifierMode::Stream) {
        if (new_cursor > cursor_) accumulate_stream(new_cursor);
    } else if (new_cursor > 0) {
        recompute_batch(new_cursor);
    }
    cursor_ = new_cursor;
    timing_.update_seconds = seconds_since(start);

    if (cursor_ > 0) history_.emplace_back(t, classify().cluster);
}

void ClassifierState::refit() {
    const auto& prior = model_->observation_prior;
    ReconstructedTrajectory r;
    r.id = observed_.id;
    auto fit = [&](const std::vector<double>& values, Hyperparameters hyper, AnchorLine& anchor) {
        anchor = fit_anchor(observed_.times, values, ReconstructOptions{}.anchor_window);
        std::vector<double> residual(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) residual[i] = values[i] - anchor(observed_.times[i]);
        if (options_.refit_hyperparameters && observed_.size() >= 3)
            hyper = optimize_hyperparameters(observed_.times, residual).hyper;
        return GpPosterior::fit(observed_.times, residual, WienerVelocityKernel(hyper.theta), hyper.noise_var);
    };
    r.gp_x = fit(observed_.xs, prior.x, r.anchor_x);
    r.gp_y = fit(observed_.ys, prior.y, r.anchor_y);
    gp_ = std::move(r);
}

std::pair<Eigen::Vector2d, Eigen::Vector2d> ClassifierState::target_marginal(std::size_t target, std::size_t i) const {
    const auto k = static_cast<std::size_t>(model_->k());
    const auto idx = static_cast<Eigen::Index>(i);
    if (target < k) {
        const auto& it = model_->intended[target];
        return {{it.mean_x[idx], it.mean_y[idx]}, {it.cov_x(idx, idx), it.cov_y(idx, idx)}};
    }
    const auto& g = model_->thresholds[target - k].per_time[i];
    return {{g.mean[0], g.mean[1]}, {g.cov(0, 0), g.cov(1, 1)}};
}

void ClassifierState::accumulate_stream(std::size_t new_cursor) {
    for (std::size_t i = cursor_; i < new_cursor; ++i) {
        const Eigen::Vector2d mu = gp_->mean(model_->grid.times[i]);
        for (std::size_t tau = 0; tau < cum_sq_.size(); ++tau) {
            const auto [m, var] = target_marginal(tau, i);
            const Eigen::Vector2d s = var.cwiseMax(options_.variance_floor);
            cum_sq_[tau] += (mu - m).cwiseAbs2().cwiseQuotient(s).sum();
        }
    }
}

void ClassifierState::recompute_batch(std::size_t new_cursor) {
    const auto p = static_cast<Eigen::Index>(new_cursor);
    Eigen::VectorXd mu_x(p), mu_y(p);
    for (Eigen::Index i = 0; i < p; ++i) {
        const double t = model_->grid.times[static_cast<std::size_t>(i)];
        mu_x[i] = gp_->mean_x(t);
        mu_y[i] = gp_->mean_y(t);
    }
    for (std::size_t tau = 0; tau < cum_sq_.size(); ++tau) {
        double total = 0.0;
        for (int dim = 0; dim < 2; ++dim) {
            const auto g = batch_->prefix(tau, dim, new_cursor);
            const Eigen::VectorXd r = (dim == 0 ? mu_x : mu_y) - g.mean;
            total += g.chol.triangularView<Eigen::Lower>().solve(r).squaredNorm();
        }
        cum_sq_[tau] = total;
    }
}

Eigen::Vector2d ClassifierState::observed_mean(double t) const {
    if (!gp_) throw Error(ErrorKind::Precondition, "classifier has no observations yet");
    return gp_->mean(t - t0_);
}

Decision ClassifierState::classify() const {
    if (cursor_ == 0) throw Error(ErrorKind::Precondition, "classify needs at least one covered grid time");
    const auto k = static_cast<std::size_t>(model_->k());
    Decision d;
    d.distances.resize(cum_sq_.size());
    for (std::size_t tau = 0; tau < cum_sq_.size(); ++tau)
        d.distances[tau] = std::sqrt(cum_sq_[tau] / (2.0 * static_cast<double>(cursor_)));

    const double straight = d.distances[kStraight];
    d.excluded_straight = straight > d.distances[k] && straight > d.distances[k + 1];
    if (!d.excluded_straight) {
        d.cluster = kStraight;
        return d;
    }
    d.cluster = 0;
    for (std::size_t c = 1; c < k; ++c)
        if (d.distances[c] < d.distances[static_cast<std::size_t>(d.cluster)]) d.cluster = static_cast<int>(c);
    return d;
}

std::vector<ReplayStep> replay(const RawTrajectory& trajectory, const TrafficModel& model,
                               const ClassifierOptions& options,
                               std::shared_ptr<const BatchReplayTargets> batch_targets) {
    ClassifierState state(model, options, std::move(batch_targets));
    std::vector<ReplayStep> steps;
    steps.reserve(trajectory.size());
    for (std::size_t i = 0; i < trajectory.size(); ++i) {
        state.ingest(trajectory.sample(i));
        if (state.grid_cursor() == 0) continue;
        ReplayStep step;
        step.timestamp = trajectory.times[i];
        step.timing = state.last_timing();
        const auto start = Clock::now();
        step.decision = state.classify();
        step.classify_seconds = seconds_since(start);
        steps.push_back(std::move(step));
    }
    return steps;
}

std::optional<double> classification_time(std::span<const ReplayStep> steps, double time_origin, int truth) {
    if (steps.empty() || steps.back().decision.cluster != truth) return std::nullopt;
    std::size_t first = steps.size() - 1;
    while (first > 0 && steps[first - 1].decision.cluster == truth) --first;
    return steps[first].timestamp - time_origin;
}

std::optional<double> classification_time(const RawTrajectory& trajectory, const TrafficModel& model, int truth,
                                          const ClassifierOptions& options) {
    if (trajectory.empty()) return std::nullopt;
    const auto steps = replay(trajectory, model, options);
    return classification_time(steps, trajectory.times.front(), truth);
}

}  // namespace isect
