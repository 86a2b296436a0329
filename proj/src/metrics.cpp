#include "isect/metrics.hpp"

#include <cstdio>

#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "isect/error.hpp"

namespace isect {

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eigen_of(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(s);
    if (solver.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "symmetric eigendecomposition failed");
    return solver;
}

Eigen::MatrixXd symmetrized(const Eigen::MatrixXd& m) { return 0.5 * (m + m.transpose()); }

// Trace of (a^1/2 b a^1/2)^1/2 given a^1/2.
double trace_sqrt_product(const Eigen::MatrixXd& sqrt_a, const Eigen::MatrixXd& b) {
    const auto solver = eigen_of(symmetrized(sqrt_a * b * sqrt_a));
    return solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
}

struct RootPair {
    Eigen::MatrixXd sqrt;
    Eigen::MatrixXd inv_sqrt;  // pseudo-inverse on the numerically null space
};

RootPair roots_of(const Eigen::MatrixXd& s) {
    const auto solver = eigen_of(symmetrized(s));
    const Eigen::VectorXd lambda = solver.eigenvalues().cwiseMax(0.0);
    const double cutoff = 1e-14 * std::max(lambda.maxCoeff(), 1e-300);
    Eigen::VectorXd root = lambda.cwiseSqrt();
    Eigen::VectorXd inv_root(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) inv_root[i] = lambda[i] > cutoff ? 1.0 / root[i] : 0.0;
    const auto& v = solver.eigenvectors();
    return {v * root.asDiagonal() * v.transpose(), v * inv_root.asDiagonal() * v.transpose()};
}

void check_same_dim(const GaussianDist& a, const GaussianDist& b) {
    if (a.dim() != b.dim())
        throw Error(ErrorKind::DimensionMismatch, "Gaussians of dimension " + std::to_string(a.dim()) + " and " +
                                                      std::to_string(b.dim()));
}

std::vector<double> normalized_weights(std::span<const double> weights, std::size_t n) {
    if (weights.size() != n) throw Error(ErrorKind::DimensionMismatch, "barycenter: one weight per distribution");
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) throw Error(ErrorKind::Domain, "barycenter weights must be non-negative");
        total += w;
    }
    if (!(total > 0.0)) throw Error(ErrorKind::Domain, "barycenter weights sum to zero");
    std::vector<double> out(weights.begin(), weights.end());
    for (double& w : out) w /= total;
    return out;
}

Eigen::MatrixXd fixed_point_map(const Eigen::MatrixXd& cov, std::span<const GaussianDist> dists,
                                const std::vector<double>& w) {
    const auto roots = roots_of(cov);
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(cov.rows(), cov.cols());
    for (std::size_t i = 0; i < dists.size(); ++i) {
        if (w[i] == 0.0) continue;
        acc += w[i] * sqrt_psd(symmetrized(roots.sqrt * dists[i].cov * roots.sqrt));
    }
    return symmetrized(roots.inv_sqrt * acc * acc * roots.inv_sqrt);
}

}  // namespace

void GaussianDist::validate() const {
    if (cov.rows() != mean.size() || cov.cols() != mean.size())
        throw Error(ErrorKind::DimensionMismatch, "covariance shape does not match the mean");
    if (!mean.allFinite() || !cov.allFinite()) throw Error(ErrorKind::Domain, "non-finite Gaussian parameters");
    if (mean.size() == 0) return;
    if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-10)
        throw Error(ErrorKind::Domain, "covariance is not symmetric");
    if (eigen_of(cov).eigenvalues().minCoeff() < -1e-10)
        throw Error(ErrorKind::Domain, "covariance is not positive semidefinite");
}

Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& s) {
    const auto solver = eigen_of(symmetrized(s));
    const auto& v = solver.eigenvectors();
    return v * solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * v.transpose();
}

double wasserstein_squared(const GaussianDist& a, const GaussianDist& b) {
    check_same_dim(a, b);
    const double cross = trace_sqrt_product(sqrt_psd(a.cov), b.cov);
    const double value = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    return std::max(value, 0.0);
}

double wasserstein(const GaussianDist& a, const GaussianDist& b) { return std::sqrt(wasserstein_squared(a, b)); }

double mahalanobis(const Eigen::VectorXd& x, const GaussianDist& f) {
    if (x.size() != f.dim()) throw Error(ErrorKind::DimensionMismatch, "mahalanobis: point and Gaussian differ in dimension");
    const Eigen::VectorXd r = x - f.mean;
    Eigen::LLT<Eigen::MatrixXd> llt(f.cov);
    if (llt.info() != Eigen::Success) {
        const double trace = f.cov.trace();
        if (!(trace > 0.0)) throw Error(ErrorKind::SingularCovariance, "mahalanobis: covariance has zero trace");
        Eigen::MatrixXd ridged = f.cov;
        ridged.diagonal().array() += 1e-9 * trace / static_cast<double>(f.dim());
        llt.compute(ridged);
        if (llt.info() != Eigen::Success)
            throw Error(ErrorKind::SingularCovariance, "mahalanobis: covariance singular beyond jitter");
    }
    return llt.matrixL().solve(r).norm();
}

GaussianDist wasserstein_geodesic(const GaussianDist& a, const GaussianDist& b, double s) {
    check_same_dim(a, b);
    if (!(s >= 0.0 && s <= 1.0)) throw Error(ErrorKind::Domain, "geodesic fraction must lie in [0, 1]");
    const auto solver = eigen_of(symmetrized(a.cov));
    const Eigen::VectorXd lambda = solver.eigenvalues();
    if (!(lambda.minCoeff() > 0.0))
        throw Error(ErrorKind::SingularCovariance, "geodesic start covariance is not positive definite");
    const auto& v = solver.eigenvectors();
    const Eigen::MatrixXd root = v * lambda.cwiseSqrt().asDiagonal() * v.transpose();
    const Eigen::MatrixXd inv_root = v * lambda.cwiseSqrt().cwiseInverse().asDiagonal() * v.transpose();
    const Eigen::MatrixXd transport = symmetrized(inv_root * sqrt_psd(symmetrized(root * b.cov * root)) * inv_root);
    Eigen::MatrixXd step = s * transport;
    step.diagonal().array() += 1.0 - s;
    return {(1.0 - s) * a.mean + s * b.mean, symmetrized(step * a.cov * step)};
}

double barycenter_residual(const Eigen::MatrixXd& cov, std::span<const GaussianDist> dists,
                           std::span<const double> weights) {
    const auto w = normalized_weights(weights, dists.size());
    return (fixed_point_map(cov, dists, w) - cov).norm();
}

namespace {

std::string format_residual(double r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", r);
    return buf;
}

}  // namespace

BarycenterResult wasserstein_barycenter(std::span<const GaussianDist> dists, std::span<const double> weights,
                                        const BarycenterOptions& options) {
    if (dists.empty()) throw Error(ErrorKind::Precondition, "barycenter of an empty set");
    const auto w = normalized_weights(weights, dists.size());
    const auto d = dists.front().dim();
    for (const auto& f : dists) check_same_dim(f, dists.front());

    BarycenterResult result;
    result.dist.mean = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < dists.size(); ++i) {
        result.dist.mean += w[i] * dists[i].mean;
        cov += w[i] * dists[i].cov;
    }
    cov = symmetrized(cov);

    double residual = 0.0;
    for (int it = 1; it <= options.max_iterations; ++it) {
        Eigen::MatrixXd next = fixed_point_map(cov, dists, w);
        residual = (next - cov).norm();
        cov = std::move(next);
        // Relative once the covariance is larger than unit scale; roundoff in
        // the matrix square roots grows with its norm.
        if (residual <= options.tolerance * std::max(1.0, cov.norm())) {
            result.dist.cov = cov;
            result.iterations = it;
            result.residual = residual;
            return result;
        }
    }
    throw Error(ErrorKind::Convergence, "barycenter did not converge in " + std::to_string(options.max_iterations) +
                                            " iterations (last residual " + format_residual(residual) + ")");
}

}  // namespace isect
