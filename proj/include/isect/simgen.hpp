#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include <Eigen/Core>

#include "isect/trajectory_data.hpp"

namespace isect {

// Synthetic one-source, three-destination intersection with right-hand
// traffic. The source lane runs north (+y) at x = lane_width / 2; the
// intersection center is the origin. Each track follows a straight approach,
// then (for turns) a circular arc, then a straight exit, at constant speed.
struct GeneratorConfig {
    std::size_t n_trajectories{1000};
    double horizon{3.0};
    double rate{20.0};
    std::array<double, 3> mix{1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};  // right, left, straight
    double noise_std{0.15};
    double drop_prob{0.05};
    double jitter_std{0.005};
    std::array<double, 2> speed_range{8.0, 12.0};       // straight-through traffic
    std::array<double, 2> turn_speed_range{5.0, 8.0};   // turning traffic
    double lane_offset_std{0.2};
    double lane_width{3.5};
    double approach{10.0};       // distance from the start point to the intersection center
    double right_radius{5.25};   // lands in the near eastbound lane
    double left_radius{8.75};    // lands in the far westbound lane
    bool burst_drops{false};     // frame drops come in geometric-length bursts
    double burst_mean_length{3.0};
    std::uint64_t seed{1};
    TrajectoryId first_id{0};
    double start_spacing{2.0};   // absolute clock offset between consecutive tracks

    // Throws Config for infeasible or inconsistent settings.
    void validate() const;
};

struct GeneratedDataset {
    std::vector<RawTrajectory> trajectories;
    std::vector<int> truth;  // canonical cluster per trajectory
};

// Arc-length parameterized path of `cluster`, shifted `lateral_offset` meters
// to the left of the direction of travel. Negative s extends the approach.
Eigen::Vector2d centerline_point(const GeneratorConfig& cfg, int cluster, double s, double lateral_offset);

// Deterministic in cfg.seed; each track draws from its own stream derived
// from (seed, id).
GeneratedDataset generate(const GeneratorConfig& cfg);

// Writes dir/data.csv (trajectory-data format) and dir/truth.csv.
void write_dataset(const GeneratedDataset& data, const std::filesystem::path& dir);

// Reads `trajectory_id,cluster`.
std::map<TrajectoryId, int> load_truth(const std::filesystem::path& path);

}  // namespace isect
