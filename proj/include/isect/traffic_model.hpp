#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "isect/clustering.hpp"
#include "isect/gp_regression.hpp"
#include "isect/metrics.hpp"

namespace isect {

// Uniformly spaced evaluation times over [0, horizon], endpoints included.
// `rate` is the nominal frame rate the grid was chosen for.
struct TimeGrid {
    std::vector<double> times;
    double horizon{3.0};
    double rate{20.0};

    static TimeGrid uniform(double horizon = 3.0, std::size_t n = 60, double rate = 20.0);

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    // Number of grid times <= t.
    [[nodiscard]] std::size_t covered_count(double t) const;
};

// Discretized per-cluster GP: empirical mean and covariance of the members'
// reconstructed means on the grid, separately in x and y.
struct IntendedTrajectory {
    int cluster{0};
    Eigen::VectorXd mean_x;
    Eigen::VectorXd mean_y;
    Eigen::MatrixXd cov_x;
    Eigen::MatrixXd cov_y;
    std::size_t member_count{0};

    // 2-D Gaussian at grid index i with zero x-y cross covariance.
    [[nodiscard]] GaussianDist marginal(std::size_t i) const;
};

enum class ThresholdSide { LeftCenter, RightCenter };

const char* to_string(ThresholdSide side) noexcept;
ThresholdSide threshold_side_from_string(const std::string& s);

struct ThresholdSequence {
    ThresholdSide side{ThresholdSide::LeftCenter};
    std::vector<GaussianDist> per_time;  // one 2-D Gaussian per grid time
};

struct ModelMetadata {
    std::string build_time;
    std::string dataset_digest;
    int k{0};
    std::size_t j{0};
};

// Hyperparameters the online classifier uses for the observed vehicle's GP
// (median of the per-track fits seen while building the model).
struct ObservationPrior {
    Hyperparameters x{100.0, 0.02};
    Hyperparameters y{100.0, 0.02};
};

struct TrafficModel {
    TimeGrid grid;
    std::vector<IntendedTrajectory> intended;   // index = canonical cluster
    std::array<ThresholdSequence, 2> thresholds{};  // [0] left-center, [1] right-center
    ModelMetadata metadata;
    ObservationPrior observation_prior;

    [[nodiscard]] int k() const noexcept { return static_cast<int>(intended.size()); }
    [[nodiscard]] const ThresholdSequence& threshold(ThresholdSide side) const {
        return thresholds[side == ThresholdSide::LeftCenter ? 0 : 1];
    }
};

struct Intention {
    double time{0.0};
    double mean_x{0.0};
    double var_x{0.0};
    double mean_y{0.0};
    double var_y{0.0};
};

// Empirical mean and covariance from evaluated member means (rows = members,
// columns = grid times). Denominator is (members - 1).
void empirical_moments(const Eigen::MatrixXd& samples, Eigen::VectorXd& mean, Eigen::MatrixXd& cov);

IntendedTrajectory build_intended(const TrajectorySet& set, const ClusterLabeling& labeling, int k,
                                  const TimeGrid& grid);

struct ModelBuildOptions {
    std::string build_time;  // empty: current UTC time
    BarycenterOptions barycenter{};
};

// Requires canonical labels with k >= 3 (right = 0, left = 1, straight = 2).
TrafficModel build_model(const TrajectorySet& set, const ClusterLabeling& labeling, const TimeGrid& grid,
                         const ModelBuildOptions& options = {});

Intention sample_intention(const TrafficModel& model, int k, double t);

// FNV-1a over the members' ids and training samples, hex encoded.
std::string dataset_digest(const TrajectorySet& set);

inline constexpr int kModelMajorVersion = 1;
inline constexpr int kModelMinorVersion = 1;

std::string model_to_json(const TrafficModel& model);
TrafficModel model_from_json(const std::string& text);
void save_model(const TrafficModel& model, const std::filesystem::path& path);
TrafficModel load_model(const std::filesystem::path& path);

}  // namespace isect
