#pragma once

// Independent reference computations and random-case generators shared by
// the unit tests and the acceptance suite. Nothing here calls into the
// library's numerical code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

namespace oracle {

inline double wiener_velocity(double theta, double t, double s) {
    const double m = t < s ? t : s;
    const double d = t > s ? t - s : s - t;
    return theta * (m * m * m / 3.0 + 0.5 * d * m * m);
}

// Posterior mean and variance via the explicit inverse of K + noise * I.
struct DenseGp {
    Eigen::VectorXd times;
    Eigen::MatrixXd inverse;
    Eigen::VectorXd alpha;
    double theta;

    DenseGp(const std::vector<double>& t, const std::vector<double>& z, double theta_, double noise) : theta(theta_) {
        const auto n = static_cast<Eigen::Index>(t.size());
        times = Eigen::Map<const Eigen::VectorXd>(t.data(), n);
        Eigen::MatrixXd k(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) k(i, j) = wiener_velocity(theta, t[i], t[j]) + (i == j ? noise : 0.0);
        inverse = k.inverse();
        alpha = inverse * Eigen::Map<const Eigen::VectorXd>(z.data(), n);
    }

    Eigen::VectorXd cross(double t) const {
        Eigen::VectorXd k(times.size());
        for (Eigen::Index i = 0; i < times.size(); ++i) k[i] = wiener_velocity(theta, times[i], t);
        return k;
    }
    double mean(double t) const { return cross(t).dot(alpha); }
    double variance(double t) const {
        const Eigen::VectorXd k = cross(t);
        return wiener_velocity(theta, t, t) - k.dot(inverse * k);
    }
};

// log N(z | 0, theta * K1 + noise * I) through a full eigendecomposition.
inline double log_marginal(const std::vector<double>& t, const std::vector<double>& z, double theta, double noise) {
    const auto n = static_cast<Eigen::Index>(t.size());
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) a(i, j) = wiener_velocity(theta, t[i], t[j]) + (i == j ? noise : 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const Eigen::VectorXd zv = Eigen::Map<const Eigen::VectorXd>(z.data(), n);
    const Eigen::VectorXd proj = es.eigenvectors().transpose() * zv;
    double quad = 0.0, logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        quad += proj[i] * proj[i] / es.eigenvalues()[i];
        logdet += std::log(es.eigenvalues()[i]);
    }
    return -0.5 * quad - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

// Textbook two-pass covariance with explicit loops; rows are samples.
inline Eigen::MatrixXd naive_covariance(const Eigen::MatrixXd& samples) {
    const auto j = samples.rows();
    const auto n = samples.cols();
    std::vector<double> mean(static_cast<std::size_t>(n), 0.0);
    for (Eigen::Index c = 0; c < n; ++c) {
        for (Eigen::Index r = 0; r < j; ++r) mean[static_cast<std::size_t>(c)] += samples(r, c);
        mean[static_cast<std::size_t>(c)] /= static_cast<double>(j);
    }
    Eigen::MatrixXd cov(n, n);
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b) {
            double s = 0.0;
            for (Eigen::Index r = 0; r < j; ++r)
                s += (samples(r, a) - mean[static_cast<std::size_t>(a)]) * (samples(r, b) - mean[static_cast<std::size_t>(b)]);
            cov(a, b) = s / static_cast<double>(j - 1);
        }
    }
    return cov;
}

// Square root of a 2x2 or larger SPD matrix by Denman-Beavers iteration,
// kept separate from the eigendecomposition the library uses.
inline Eigen::MatrixXd sqrt_spd(const Eigen::MatrixXd& a) {
    Eigen::MatrixXd y = a;
    Eigen::MatrixXd z = Eigen::MatrixXd::Identity(a.rows(), a.cols());
    for (int i = 0; i < 100; ++i) {
        const Eigen::MatrixXd y_next = 0.5 * (y + z.inverse());
        const Eigen::MatrixXd z_next = 0.5 * (z + y.inverse());
        const double change = (y_next - y).norm();
        y = y_next;
        z = z_next;
        if (change < 1e-15 * (1.0 + y.norm())) break;
    }
    return y;
}

// Hand-rolled case generator; each property test draws from its own seed.
class Gen {
public:
    explicit Gen(std::uint64_t seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
    double log_uniform(double lo, double hi) { return std::exp(uniform(std::log(lo), std::log(hi))); }

    // Sorted distinct non-negative times with a minimum gap.
    std::vector<double> times(int n, double horizon = 3.0, double min_gap = 0.02) {
        for (;;) {
            std::vector<double> t(static_cast<std::size_t>(n));
            for (auto& v : t) v = uniform(0.0, horizon);
            std::sort(t.begin(), t.end());
            bool ok = true;
            for (std::size_t i = 1; i < t.size(); ++i) ok = ok && t[i] - t[i - 1] >= min_gap;
            if (ok) return t;
        }
    }

    std::vector<double> values(int n, double scale = 1.0) {
        std::vector<double> z(static_cast<std::size_t>(n));
        for (auto& v : z) v = scale * normal();
        return z;
    }

    Eigen::MatrixXd spd(int d, double min_eig = 0.05, double max_eig = 4.0) {
        Eigen::MatrixXd g(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) g(i, j) = normal();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        const Eigen::MatrixXd q = qr.householderQ();
        Eigen::VectorXd eig(d);
        for (int i = 0; i < d; ++i) eig[i] = log_uniform(min_eig, max_eig);
        Eigen::MatrixXd s = q * eig.asDiagonal() * q.transpose();
        return 0.5 * (s + s.transpose());
    }

    Eigen::VectorXd vec(int d, double scale = 1.0) {
        Eigen::VectorXd v(d);
        for (int i = 0; i < d; ++i) v[i] = scale * normal();
        return v;
    }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

}  // namespace oracle
