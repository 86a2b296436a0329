#include <gtest/gtest.h>

#include <cmath>

#include "isect/error.hpp"
#include "isect/metrics.hpp"
#include "oracles.hpp"

using namespace isect;

namespace {

GaussianDist g1(double m, double var) { return {Eigen::VectorXd::Constant(1, m), Eigen::MatrixXd::Constant(1, 1, var)}; }

GaussianDist random_gaussian(oracle::Gen& g, int d) { return {g.vec(d, 2.0), g.spd(d)}; }

// Bures-Wasserstein distance via Denman-Beavers square roots.
double oracle_wasserstein(const GaussianDist& a, const GaussianDist& b) {
    const Eigen::MatrixXd ra = oracle::sqrt_spd(a.cov);
    const Eigen::MatrixXd cross = oracle::sqrt_spd(ra * b.cov * ra);
    const double v = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * cross.trace();
    return std::sqrt(std::max(v, 0.0));
}

}  // namespace

TEST(Wasserstein, IdenticalIsZero) {
    oracle::Gen g(1);
    for (int d = 1; d <= 3; ++d) {
        const auto f = random_gaussian(g, d);
        EXPECT_LE(wasserstein(f, f), 1e-6);
    }
}

TEST(Wasserstein, OneDimensionalClosedForm) {
    oracle::Gen g(2);
    for (int i = 0; i < 1000; ++i) {
        const double m1 = g.uniform(-10, 10), m2 = g.uniform(-10, 10);
        const double s1 = g.log_uniform(1e-3, 10.0), s2 = g.log_uniform(1e-3, 10.0);
        const double expect = std::hypot(m1 - m2, s1 - s2);
        EXPECT_NEAR(wasserstein(g1(m1, s1 * s1), g1(m2, s2 * s2)), expect, 1e-10 * std::max(1.0, expect));
    }
}

TEST(Wasserstein, EqualCovariancesLeaveEuclideanTerm) {
    const GaussianDist a{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity()};
    const GaussianDist b{Eigen::Vector2d(3, 4), Eigen::Matrix2d::Identity()};
    EXPECT_NEAR(wasserstein(a, b), 5.0, 1e-12);
}

TEST(Wasserstein, MatchesIndependentSquareRootOracle) {
    oracle::Gen g(3);
    for (int i = 0; i < 200; ++i) {
        const int d = g.integer(1, 4);
        const auto a = random_gaussian(g, d), b = random_gaussian(g, d);
        EXPECT_NEAR(wasserstein(a, b), oracle_wasserstein(a, b), 1e-8);
    }
}

TEST(Wasserstein, MetricAxioms) {
    oracle::Gen g(4);
    for (int i = 0; i < 100; ++i) {
        const int d = g.integer(1, 3);
        const auto a = random_gaussian(g, d), b = random_gaussian(g, d), c = random_gaussian(g, d);
        const double ab = wasserstein(a, b), ba = wasserstein(b, a), bc = wasserstein(b, c), ac = wasserstein(a, c);
        EXPECT_GE(ab, 0.0);
        EXPECT_NEAR(ab, ba, 1e-8);
        EXPECT_LE(ac, ab + bc + 1e-8);
    }
}

TEST(Wasserstein, DimensionMismatch) {
    try {
        wasserstein(g1(0, 1), GaussianDist{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DimensionMismatch);
    }
}

TEST(Mahalanobis, HandValues) {
    const GaussianDist f{Eigen::Vector2d(0, 0), Eigen::Vector2d(4, 1).asDiagonal()};
    EXPECT_NEAR(mahalanobis(Eigen::Vector2d(2, 0), f), 1.0, 1e-12);
    EXPECT_EQ(mahalanobis(Eigen::Vector2d(0, 0), f), 0.0);
    const GaussianDist id{Eigen::Vector2d(1, 1), Eigen::Matrix2d::Identity()};
    EXPECT_NEAR(mahalanobis(Eigen::Vector2d(4, 5), id), 5.0, 1e-12);
}

TEST(Mahalanobis, AffineInvariance) {
    oracle::Gen g(5);
    for (int i = 0; i < 100; ++i) {
        const int d = g.integer(1, 4);
        const auto f = random_gaussian(g, d);
        const Eigen::VectorXd x = g.vec(d, 3.0);
        Eigen::MatrixXd a = Eigen::MatrixXd::Identity(d, d) + 0.3 * Eigen::MatrixXd(g.spd(d, 0.1, 1.0));
        const Eigen::VectorXd b = g.vec(d);
        const GaussianDist mapped{a * f.mean + b, a * f.cov * a.transpose()};
        EXPECT_NEAR(mahalanobis(a * x + b, mapped), mahalanobis(x, f), 1e-6);
    }
}

TEST(Mahalanobis, SingularCovariance) {
    const GaussianDist zero{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Zero()};
    try {
        mahalanobis(Eigen::Vector2d(1, 0), zero);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::SingularCovariance);
    }
    // Rank deficient but non-zero: rescued by the ridge.
    const GaussianDist flat{Eigen::Vector2d::Zero(), Eigen::Vector2d(1.0, 0.0).asDiagonal()};
    EXPECT_NEAR(mahalanobis(Eigen::Vector2d(1, 0), flat), 1.0, 1e-6);
}

TEST(Barycenter, IdenticalInputsReturnInput) {
    oracle::Gen g(6);
    const auto f = random_gaussian(g, 3);
    const std::vector<GaussianDist> dists{f, f, f};
    const std::vector<double> w{0.2, 0.3, 0.5};
    const auto r = wasserstein_barycenter(dists, w);
    EXPECT_LE((r.dist.mean - f.mean).norm(), 1e-12);
    EXPECT_LE((r.dist.cov - f.cov).norm(), 1e-9);
}

TEST(Barycenter, OneDimensionalClosedForm) {
    const std::vector<GaussianDist> dists{g1(1.0, 4.0), g1(3.0, 9.0)};
    const std::vector<double> w{0.5, 0.5};
    const auto r = wasserstein_barycenter(dists, w);
    EXPECT_NEAR(r.dist.mean[0], 2.0, 1e-12);
    EXPECT_NEAR(r.dist.cov(0, 0), 6.25, 1e-9);
}

TEST(Barycenter, CommutingCovariancesClosedForm) {
    oracle::Gen g(7);
    for (int i = 0; i < 100; ++i) {
        const int d = g.integer(1, 3);
        // Shared eigenvectors make the covariances commute.
        const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g.spd(d)).householderQ();
        Eigen::VectorXd l1(d), l2(d);
        for (int k = 0; k < d; ++k) l1[k] = g.log_uniform(0.05, 5.0), l2[k] = g.log_uniform(0.05, 5.0);
        const Eigen::MatrixXd s1 = q * l1.asDiagonal() * q.transpose(), s2 = q * l2.asDiagonal() * q.transpose();
        const std::vector<GaussianDist> dists{{g.vec(d), s1}, {g.vec(d), s2}};
        const std::vector<double> w{1.0, 1.0};
        const auto r = wasserstein_barycenter(dists, w);
        const Eigen::MatrixXd half = 0.5 * (oracle::sqrt_spd(s1) + oracle::sqrt_spd(s2));
        EXPECT_LE((r.dist.cov - half * half).norm(), 1e-7);
        EXPECT_LE((r.dist.mean - 0.5 * (dists[0].mean + dists[1].mean)).norm(), 1e-12);
    }
}

TEST(Barycenter, ResidualSmallAndWeightOneIsIdentity) {
    oracle::Gen g(8);
    for (int i = 0; i < 100; ++i) {
        const int d = g.integer(1, 3);
        const int n = g.integer(2, 4);
        std::vector<GaussianDist> dists;
        std::vector<double> w;
        for (int k = 0; k < n; ++k) {
            dists.push_back(random_gaussian(g, d));
            w.push_back(g.uniform(0.1, 1.0));
        }
        const auto r = wasserstein_barycenter(dists, w);
        EXPECT_LE(barycenter_residual(r.dist.cov, dists, w), 1e-7);
        EXPECT_NO_THROW(r.dist.validate());

        const std::vector<GaussianDist> pair{dists[0], dists[1]};
        const std::vector<double> onehot{1.0, 0.0};
        const auto id = wasserstein_barycenter(pair, onehot);
        EXPECT_LE((id.dist.cov - dists[0].cov).norm(), 1e-8);
        EXPECT_LE((id.dist.mean - dists[0].mean).norm(), 1e-12);
    }
}

TEST(Barycenter, MinimizesWeightedSquaredDistanceLocally) {
    oracle::Gen g(9);
    const std::vector<GaussianDist> dists{random_gaussian(g, 2), random_gaussian(g, 2), random_gaussian(g, 2)};
    const std::vector<double> w{0.5, 0.3, 0.2};
    const auto r = wasserstein_barycenter(dists, w);
    auto objective = [&](const GaussianDist& f) {
        double s = 0.0;
        for (std::size_t i = 0; i < dists.size(); ++i) s += w[i] * wasserstein_squared(f, dists[i]);
        return s;
    };
    const double best = objective(r.dist);
    for (int k = 0; k < 50; ++k) {
        Eigen::MatrixXd e = g.spd(2, 0.01, 0.1) - g.spd(2, 0.01, 0.1);
        GaussianDist p{r.dist.mean + 0.05 * g.vec(2), r.dist.cov + 0.1 * e};
        if (Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(p.cov).eigenvalues().minCoeff() <= 0) continue;
        EXPECT_GE(objective(p), best - 1e-10);
    }
}

TEST(Barycenter, ReportsNonConvergence) {
    oracle::Gen g(10);
    const std::vector<GaussianDist> dists{random_gaussian(g, 3), random_gaussian(g, 3)};
    const std::vector<double> w{0.5, 0.5};
    try {
        wasserstein_barycenter(dists, w, {0.0, 3});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Convergence);
        EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
    }
}

TEST(Barycenter, RejectsBadWeights) {
    const std::vector<GaussianDist> dists{g1(0, 1), g1(1, 1)};
    const std::vector<double> zero{0.0, 0.0}, negative{1.0, -1.0}, short_w{1.0};
    EXPECT_THROW(wasserstein_barycenter(dists, zero), Error);
    EXPECT_THROW(wasserstein_barycenter(dists, negative), Error);
    EXPECT_THROW(wasserstein_barycenter(dists, short_w), Error);
    EXPECT_THROW(wasserstein_barycenter({}, {}), Error);
}

TEST(GaussianDist, Validate) {
    GaussianDist asym{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
    asym.cov(0, 1) = 0.5;
    EXPECT_THROW(asym.validate(), Error);
    const GaussianDist neg{Eigen::Vector2d::Zero(), Eigen::Vector2d(1.0, -1.0).asDiagonal()};
    EXPECT_THROW(neg.validate(), Error);
    const GaussianDist shape{Eigen::Vector2d::Zero(), Eigen::Matrix3d::Identity()};
    EXPECT_THROW(shape.validate(), Error);
}

TEST(SqrtPsd, SquaresBackAndClampsNegatives) {
    oracle::Gen g(11);
    const Eigen::MatrixXd s = g.spd(4);
    const Eigen::MatrixXd r = sqrt_psd(s);
    EXPECT_LE((r * r - s).norm(), 1e-10);
    const Eigen::Matrix2d m = Eigen::Vector2d(4.0, -1e-14).asDiagonal();
    const Eigen::MatrixXd rm = sqrt_psd(m);
    EXPECT_NEAR(rm(0, 0), 2.0, 1e-14);
    EXPECT_EQ(rm(1, 1), 0.0);
}

TEST(Geodesic, EndpointsMidpointAndConstantSpeed) {
    oracle::Gen g(11);
    for (int i = 0; i < 100; ++i) {
        const int d = g.integer(1, 4);
        const auto a = random_gaussian(g, d), b = random_gaussian(g, d);
        EXPECT_LE((wasserstein_geodesic(a, b, 0.0).cov - a.cov).norm(), 1e-12);
        EXPECT_LE((wasserstein_geodesic(a, b, 1.0).cov - b.cov).norm(), 1e-8);
        const std::vector<GaussianDist> pair{a, b};
        const std::vector<double> half{0.5, 0.5};
        const auto mid = wasserstein_geodesic(a, b, 0.5);
        EXPECT_LE((mid.cov - wasserstein_barycenter(pair, half).dist.cov).norm(), 1e-7);
        const double s = g.uniform(0.0, 1.0);
        const auto p = wasserstein_geodesic(a, b, s);
        const double ab = wasserstein(a, b);
        EXPECT_NEAR(wasserstein(a, p), s * ab, 1e-6 * (1.0 + ab));
        EXPECT_NEAR(wasserstein(p, b), (1.0 - s) * ab, 1e-6 * (1.0 + ab));
    }
}

TEST(Geodesic, Errors) {
    const GaussianDist a{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity()};
    const GaussianDist singular{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Zero()};
    EXPECT_THROW(wasserstein_geodesic(a, a, 1.5), Error);
    EXPECT_THROW(wasserstein_geodesic(singular, a, 0.5), Error);
    EXPECT_THROW(wasserstein_geodesic(a, g1(0.0, 1.0), 0.5), Error);
}
