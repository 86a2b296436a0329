#include "isect/gp_regression.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>
#include <string>

#include "isect/error.hpp"
#include "isect/parallel.hpp"

namespace isect {

namespace {

Eigen::Map<const Eigen::VectorXd> as_vector(std::span<const double> v) {
    return {v.data(), static_cast<Eigen::Index>(v.size())};
}

void check_time(double t) {
    if (!(t >= 0.0) || !std::isfinite(t))
        throw Error(ErrorKind::Domain, "kernel time must be finite and non-negative, got " + std::to_string(t));
}

Eigen::MatrixXd unit_gram(std::span<const double> times) {
    const auto n = static_cast<Eigen::Index>(times.size());
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        k(i, i) = WienerVelocityKernel::unit(times[i], times[i]);
        for (Eigen::Index j = 0; j < i; ++j) k(i, j) = k(j, i) = WienerVelocityKernel::unit(times[i], times[j]);
    }
    return k;
}

// Log marginal likelihood for A = theta * unit + noise_var * I.
std::optional<double> lml_from_unit_gram(const Eigen::MatrixXd& unit, const Eigen::Ref<const Eigen::VectorXd>& z,
                                         const Hyperparameters& hyper) {
    const auto n = unit.rows();
    Eigen::MatrixXd a = hyper.theta * unit;
    a.diagonal().array() += hyper.noise_var;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Eigen::VectorXd alpha = llt.solve(z);
    const double log_det_half = llt.matrixLLT().diagonal().array().log().sum();
    const double value = -0.5 * z.dot(alpha) - log_det_half -
                         0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    if (!std::isfinite(value)) return std::nullopt;
    return value;
}

}  // namespace

WienerVelocityKernel::WienerVelocityKernel(double theta) : theta_(theta) {
    if (!(theta > 0.0) || !std::isfinite(theta))
        throw Error(ErrorKind::Domain, "kernel theta must be positive and finite");
}

double WienerVelocityKernel::unit(double t, double s) noexcept {
    const double m = std::min(t, s);
    return m * m * m / 3.0 + 0.5 * std::abs(t - s) * m * m;
}

double WienerVelocityKernel::operator()(double t, double s) const {
    check_time(t);
    check_time(s);
    return theta_ * unit(t, s);
}

Eigen::MatrixXd gram_matrix(const WienerVelocityKernel& kernel, std::span<const double> times) {
    for (double t : times) check_time(t);
    return kernel.theta() * unit_gram(times);
}

GpPosterior GpPosterior::prior(const WienerVelocityKernel& kernel) {
    GpPosterior p;
    p.kernel_ = kernel;
    return p;
}

GpPosterior GpPosterior::fit(std::span<const double> times, std::span<const double> values,
                             const WienerVelocityKernel& kernel, double noise_var, const JitterPolicy& policy) {
    if (times.empty()) throw Error(ErrorKind::Precondition, "GP fit needs at least one observation");
    if (times.size() != values.size())
        throw Error(ErrorKind::DimensionMismatch, "GP fit: times and values differ in length");
    if (!(noise_var >= 0.0) || !std::isfinite(noise_var))
        throw Error(ErrorKind::Domain, "GP fit: noise variance must be finite and non-negative");
    for (double v : values)
        if (!std::isfinite(v)) throw Error(ErrorKind::Domain, "GP fit: non-finite observation");

    GpPosterior p;
    p.kernel_ = kernel;
    p.noise_var_ = noise_var;
    p.times_ = as_vector(times);
    p.values_ = as_vector(values);

    Eigen::MatrixXd a = gram_matrix(kernel, times);
    a.diagonal().array() += noise_var;
    p.llt_.compute(a);
    if (p.llt_.info() != Eigen::Success) {
        bool ok = false;
        for (double eps = policy.initial; eps <= policy.max * (1.0 + 1e-12); eps *= policy.factor) {
            Eigen::MatrixXd jittered = a;
            jittered.diagonal().array() += eps;
            p.llt_.compute(jittered);
            if (p.llt_.info() == Eigen::Success) {
                p.jitter_ = eps;
                ok = true;
                break;
            }
        }
        if (!ok)
            throw Error(ErrorKind::IllConditionedKernel, "GP fit: covariance not positive definite at maximum jitter");
    }
    p.weights_ = p.llt_.solve(p.values_);
    if (!p.weights_.allFinite()) throw Error(ErrorKind::IllConditionedKernel, "GP fit: non-finite weights");
    return p;
}

Eigen::VectorXd GpPosterior::cross_covariance(double t) const {
    Eigen::VectorXd k(times_.size());
    for (Eigen::Index i = 0; i < times_.size(); ++i) k[i] = kernel_.theta() * WienerVelocityKernel::unit(times_[i], t);
    return k;
}

double GpPosterior::mean(double t) const {
    check_time(t);
    if (!has_data()) return 0.0;
    return cross_covariance(t).dot(weights_);
}

Eigen::VectorXd GpPosterior::mean(std::span<const double> ts) const {
    Eigen::VectorXd out(ts.size());
    for (std::size_t i = 0; i < ts.size(); ++i) out[static_cast<Eigen::Index>(i)] = mean(ts[i]);
    return out;
}

double GpPosterior::variance(double t) const {
    const double prior_var = kernel_(t, t);
    if (!has_data()) return prior_var;
    const Eigen::VectorXd v = llt_.matrixL().solve(cross_covariance(t));
    const double var = prior_var - v.squaredNorm();
    // Cancellation error scales with the prior variance.
    const double tol = 1e-10 * std::max(1.0, prior_var);
    if (var < -tol || !std::isfinite(var))
        throw Error(ErrorKind::NumericalFailure, "GP posterior variance is negative: " + std::to_string(var));
    return std::clamp(var, 0.0, prior_var);
}

void write_posterior_csv(std::ostream& out, const GpPosterior& posterior, std::span<const double> times) {
    out << "t,mean,variance\n" << std::setprecision(17);
    for (double t : times) out << t << ',' << posterior.mean(t) << ',' << posterior.variance(t) << '\n';
}

std::optional<double> log_marginal_likelihood(std::span<const double> times, std::span<const double> values,
                                              const Hyperparameters& hyper) {
    if (times.size() != values.size())
        throw Error(ErrorKind::DimensionMismatch, "log marginal likelihood: times and values differ in length");
    for (double t : times) check_time(t);
    return lml_from_unit_gram(unit_gram(times), as_vector(values), hyper);
}

HyperFit optimize_hyperparameters(std::span<const double> times, std::span<const double> values,
                                  const HyperSearch& search) {
    if (times.size() < 3)
        throw Error(ErrorKind::Precondition, "hyperparameter optimization needs at least 3 observations");
    if (times.size() != values.size())
        throw Error(ErrorKind::DimensionMismatch, "hyperparameter optimization: length mismatch");
    if (search.grid_points < 2 || !(search.theta_min > 0.0) || !(search.theta_max > search.theta_min) ||
        !(search.noise_min > 0.0) || !(search.noise_max > search.noise_min))
        throw Error(ErrorKind::Config, "invalid hyperparameter search ranges");
    for (double t : times) check_time(t);

    const Eigen::MatrixXd unit = unit_gram(times);
    const auto z = as_vector(values);

    const double lt_min = std::log10(search.theta_min);
    const double lt_max = std::log10(search.theta_max);
    const double ln_min = std::log10(search.noise_min);
    const double ln_max = std::log10(search.noise_max);
    const double lt_step = (lt_max - lt_min) / (search.grid_points - 1);
    const double ln_step = (ln_max - ln_min) / (search.grid_points - 1);

    auto evaluate = [&](double log_theta, double log_noise) {
        return lml_from_unit_gram(unit, z, {std::pow(10.0, log_theta), std::pow(10.0, log_noise)});
    };

    double best = -std::numeric_limits<double>::infinity();
    double best_lt = 0.0;
    double best_ln = 0.0;
    bool found = false;
    for (int i = 0; i < search.grid_points; ++i) {
        const double lt = lt_min + i * lt_step;
        for (int j = 0; j < search.grid_points; ++j) {
            const double ln = ln_min + j * ln_step;
            const auto value = evaluate(lt, ln);
            if (value && *value > best) {
                best = *value;
                best_lt = lt;
                best_ln = ln;
                found = true;
            }
        }
    }
    if (!found) throw Error(ErrorKind::OptimizationFailed, "no grid point gave a positive definite covariance");

    double step_t = lt_step;
    double step_n = ln_step;
    for (int r = 0; r < search.refinements; ++r) {
        step_t *= 0.5;
        step_n *= 0.5;
        for (double candidate : {best_lt - step_t, best_lt + step_t}) {
            if (candidate < lt_min || candidate > lt_max) continue;
            const auto value = evaluate(candidate, best_ln);
            if (value && *value > best) {
                best = *value;
                best_lt = candidate;
            }
        }
        for (double candidate : {best_ln - step_n, best_ln + step_n}) {
            if (candidate < ln_min || candidate > ln_max) continue;
            const auto value = evaluate(best_lt, candidate);
            if (value && *value > best) {
                best = *value;
                best_ln = candidate;
            }
        }
    }
    return {{std::pow(10.0, best_lt), std::pow(10.0, best_ln)}, best};
}

AnchorLine fit_anchor(std::span<const double> times, std::span<const double> values, std::size_t window) {
    if (times.empty() || values.empty()) throw Error(ErrorKind::Precondition, "anchor line of an empty series");
    const std::size_t n = std::min({window, times.size(), values.size()});
    if (n <= 1) return {values.front(), 0.0};
    double st = 0.0, sz = 0.0, stt = 0.0, stz = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        st += times[i];
        sz += values[i];
        stt += times[i] * times[i];
        stz += times[i] * values[i];
    }
    const double dn = static_cast<double>(n);
    const double denom = dn * stt - st * st;
    if (std::abs(denom) <= 1e-300) return {sz / dn, 0.0};
    const double slope = (dn * stz - st * sz) / denom;
    return {(sz - slope * st) / dn, slope};
}

ReconstructedTrajectory reconstruct(const RawTrajectory& traj, const ReconstructOptions& options) {
    try {
        traj.validate();
        if (traj.times.front() < 0.0)
            throw Error(ErrorKind::Precondition, "trajectory must be start-time normalized");

        ReconstructedTrajectory out;
        out.id = traj.id;
        out.extrapolated = traj.needs_extrapolation;

        auto fit_dimension = [&](const std::vector<double>& values, const std::optional<Hyperparameters>& fixed,
                                 AnchorLine& anchor) {
            anchor = fit_anchor(traj.times, values, options.anchor_window);
            std::vector<double> residual(values.size());
            for (std::size_t i = 0; i < values.size(); ++i) residual[i] = values[i] - anchor(traj.times[i]);
            const Hyperparameters hyper =
                fixed ? *fixed : optimize_hyperparameters(traj.times, residual, options.search).hyper;
            return GpPosterior::fit(traj.times, residual, WienerVelocityKernel(hyper.theta), hyper.noise_var);
        };
        out.gp_x = fit_dimension(traj.xs, options.fixed_x, out.anchor_x);
        out.gp_y = fit_dimension(traj.ys, options.fixed_y, out.anchor_y);
        return out;
    } catch (const Error& e) {
        throw Error(e.kind(), "trajectory " + std::to_string(traj.id) + ": " + e.what());
    }
}

TrajectorySet::TrajectorySet(std::vector<ReconstructedTrajectory> members) : members_(std::move(members)) {
    std::set<TrajectoryId> ids;
    for (const auto& m : members_)
        if (!ids.insert(m.id).second)
            throw Error(ErrorKind::Precondition, "duplicate trajectory id " + std::to_string(m.id));
}

TrajectorySet::Evaluation TrajectorySet::evaluate(std::span<const double> times) const {
    const auto j = static_cast<Eigen::Index>(members_.size());
    const auto n = static_cast<Eigen::Index>(times.size());
    Evaluation e{Eigen::MatrixXd(j, n), Eigen::MatrixXd(j, n)};
    for (Eigen::Index r = 0; r < j; ++r) {
        const auto& m = members_[static_cast<std::size_t>(r)];
        for (Eigen::Index c = 0; c < n; ++c) {
            e.x(r, c) = m.mean_x(times[static_cast<std::size_t>(c)]);
            e.y(r, c) = m.mean_y(times[static_cast<std::size_t>(c)]);
        }
    }
    return e;
}

TrajectorySet build_trajectory_set(std::span<const RawTrajectory> trajectories, const ReconstructOptions& options,
                                   std::size_t threads) {
    if (trajectories.empty()) throw Error(ErrorKind::Precondition, "cannot build a trajectory set from no tracks");

    std::vector<std::optional<ReconstructedTrajectory>> results(trajectories.size());
    std::vector<std::string> failures(trajectories.size());
    parallel_for(trajectories.size(), threads, [&](std::size_t i) {
        try {
            results[i] = reconstruct(trajectories[i], options);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });

    std::ostringstream failed;
    std::size_t n_failed = 0;
    std::vector<ReconstructedTrajectory> members;
    members.reserve(trajectories.size());
    for (std::size_t i = 0; i < trajectories.size(); ++i) {
        if (results[i]) {
            members.push_back(std::move(*results[i]));
        } else {
            failed << (n_failed++ ? ", " : "") << trajectories[i].id;
        }
    }
    if (n_failed > 0)
        throw Error(ErrorKind::Aggregate,
                    std::to_string(n_failed) + " trajectories failed to reconstruct (ids: " + failed.str() + ")");
    return TrajectorySet(std::move(members));
}

}  // namespace isect
