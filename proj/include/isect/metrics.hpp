#pragma once

#include <span>
#include <vector>

#include <Eigen/Core>

namespace isect {

struct GaussianDist {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;

    [[nodiscard]] Eigen::Index dim() const noexcept { return mean.size(); }

    // Shape agreement, symmetry to 1e-10 and eigenvalues >= -1e-10.
    void validate() const;
};

// Principal square root of a symmetric PSD matrix; negative eigenvalues are
// clamped to zero.
Eigen::MatrixXd sqrt_psd(const Eigen::MatrixXd& s);

// 2-Wasserstein (Bures) distance between Gaussians:
//   W^2 = |m1 - m2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2).
double wasserstein(const GaussianDist& a, const GaussianDist& b);
double wasserstein_squared(const GaussianDist& a, const GaussianDist& b);

// sqrt((x - m)^T S^-1 (x - m)). When S is not numerically positive definite a
// ridge of 1e-9 * tr(S) / d is added before giving up with SingularCovariance.
double mahalanobis(const Eigen::VectorXd& x, const GaussianDist& f);

struct BarycenterOptions {
    // Frobenius norm of the covariance update, scaled by max(1, |S|_F).
    double tolerance{1e-9};
    int max_iterations{200};
};

struct BarycenterResult {
    GaussianDist dist;
    int iterations{0};
    double residual{0.0};
};

// Weighted Wasserstein barycenter. The mean is the weighted mean; the
// covariance is the fixed point of
//   S <- S^-1/2 (sum_i w_i (S^1/2 S_i S^1/2)^1/2)^2 S^-1/2
// started from sum_i w_i S_i. Weights are normalized on entry. Throws
// Convergence (with the last residual in the message) if the iteration cap
// is reached.
BarycenterResult wasserstein_barycenter(std::span<const GaussianDist> dists, std::span<const double> weights,
                                        const BarycenterOptions& options = {});

// Point at fraction s in [0, 1] along the Wasserstein geodesic from a to b:
// mean (1-s) m_a + s m_b, covariance ((1-s) I + s T) S_a ((1-s) I + s T) with
// T = S_a^-1/2 (S_a^1/2 S_b S_a^1/2)^1/2 S_a^-1/2 the optimal transport map.
// At s = 1/2 this is the equal-weight barycenter of the pair, in closed form.
// S_a must be positive definite.
GaussianDist wasserstein_geodesic(const GaussianDist& a, const GaussianDist& b, double s);

// Frobenius norm of F(S) - S for the fixed-point map above.
double barycenter_residual(const Eigen::MatrixXd& cov, std::span<const GaussianDist> dists,
                           std::span<const double> weights);

}  // namespace isect
