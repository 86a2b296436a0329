#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace isect {

using TrajectoryId = std::int64_t;

// One detection: where a tracked vehicle was seen and when.
struct Sample {
    TrajectoryId trajectory_id{0};
    double timestamp{0.0};
    Eigen::Vector2d position{Eigen::Vector2d::Zero()};
};

// Non-uniformly sampled planar track of a single vehicle.
struct RawTrajectory {
    TrajectoryId id{0};
    std::vector<double> times;
    std::vector<double> xs;
    std::vector<double> ys;
    // Set by homogenize() when the track ends before the horizon and the
    // reconstruction has to extrapolate.
    bool needs_extrapolation{false};

    [[nodiscard]] std::size_t size() const noexcept { return times.size(); }
    [[nodiscard]] bool empty() const noexcept { return times.empty(); }
    [[nodiscard]] double duration() const noexcept {
        return times.empty() ? 0.0 : times.back() - times.front();
    }
    [[nodiscard]] Sample sample(std::size_t i) const {
        return Sample{id, times[i], Eigen::Vector2d(xs[i], ys[i])};
    }

    void push_back(double t, double x, double y) {
        times.push_back(t);
        xs.push_back(x);
        ys.push_back(y);
    }

    // Throws Precondition unless times are strictly increasing, the three
    // columns have equal length, everything is finite, and size() >= 2.
    void validate() const;
};

struct PreprocessConfig {
    double horizon{3.0};
    double min_duration_fraction{0.8};
    std::size_t min_samples{5};

    void validate() const;
};

enum class DatasetFormat { Csv, Json };

// Picks the format from the extension (.json -> Json, otherwise Csv).
DatasetFormat format_from_path(const std::filesystem::path& path);

// Groups rows by trajectory_id (ascending id), sorts each group by time and
// keeps the first row of any duplicated (id, timestamp) pair.
std::vector<RawTrajectory> load_dataset(const std::filesystem::path& path, DatasetFormat format);
std::vector<RawTrajectory> parse_csv(std::istream& in);
std::vector<RawTrajectory> parse_json(std::istream& in);
std::vector<RawTrajectory> group_samples(std::vector<Sample> samples);

// Writes `trajectory_id,timestamp,x,y` with round-trip precision.
void write_csv(std::ostream& out, std::span<const RawTrajectory> trajectories);
void save_dataset(const std::filesystem::path& path, std::span<const RawTrajectory> trajectories);

RawTrajectory normalize_start_time(RawTrajectory traj);

struct HomogenizeResult {
    std::vector<RawTrajectory> kept;
    std::vector<TrajectoryId> discarded;
};

HomogenizeResult homogenize(std::span<const RawTrajectory> trajectories, const PreprocessConfig& cfg);

// normalize_start_time on every track followed by homogenize.
HomogenizeResult preprocess(std::span<const RawTrajectory> trajectories, const PreprocessConfig& cfg);

}  // namespace isect
