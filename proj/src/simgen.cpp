#include "isect/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

#include "isect/clustering.hpp"
#include "isect/error.hpp"

namespace isect {

namespace {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Portable draws so the dataset bytes do not depend on the standard library.
class Draws {
public:
    explicit Draws(std::uint64_t seed) : rng_(seed) {}

    double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    std::mt19937_64 rng_;
};

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorKind::Config, "generator: " + what);
}

double turn_start_y(const GeneratorConfig& cfg, int cluster) {
    const double half = 0.5 * cfg.lane_width;
    return cluster == kRightTurn ? -half - cfg.right_radius : half - cfg.left_radius;
}

}  // namespace

void GeneratorConfig::validate() const {
    require(horizon > 0.0 && rate > 0.0, "horizon and rate must be positive");
    require(horizon * rate >= 4.0, "horizon * rate must allow at least 5 frames");
    double total = 0.0;
    for (double p : mix) {
        require(p >= 0.0 && p <= 1.0, "mix probabilities must lie in [0, 1]");
        total += p;
    }
    require(std::abs(total - 1.0) <= 1e-9, "mix must sum to 1");
    require(noise_std >= 0.0 && jitter_std >= 0.0 && lane_offset_std >= 0.0, "spreads must be non-negative");
    require(drop_prob >= 0.0 && drop_prob < 1.0, "drop_prob must lie in [0, 1)");
    require(speed_range[0] > 0.0 && speed_range[1] >= speed_range[0], "invalid speed_range");
    require(turn_speed_range[0] > 0.0 && turn_speed_range[1] >= turn_speed_range[0], "invalid turn_speed_range");
    require(lane_width > 0.0 && right_radius > 0.0 && left_radius > 0.0, "lane width and radii must be positive");
    require(turn_start_y(*this, kRightTurn) > -approach && turn_start_y(*this, kLeftTurn) > -approach,
            "turns must begin after the start point (approach too short for the radii)");
    require(!burst_drops || burst_mean_length >= 1.0, "burst_mean_length must be >= 1");
}

Eigen::Vector2d centerline_point(const GeneratorConfig& cfg, int cluster, double s, double lateral_offset) {
    const double lane_x = 0.5 * cfg.lane_width;
    const Eigen::Vector2d start(lane_x, -cfg.approach);
    if (cluster == kStraight) return start + Eigen::Vector2d(-lateral_offset, s);

    const bool right = cluster == kRightTurn;
    const double radius = right ? cfg.right_radius : cfg.left_radius;
    const double y_turn = turn_start_y(cfg, cluster);
    const double approach_len = y_turn + cfg.approach;
    if (s <= approach_len) return start + Eigen::Vector2d(-lateral_offset, s);

    const double arc_len = 0.5 * std::numbers::pi * radius;
    const double side = right ? 1.0 : -1.0;  // +1: center to the east
    const Eigen::Vector2d center(lane_x + side * radius, y_turn);
    if (s <= approach_len + arc_len) {
        const double phi = (s - approach_len) / radius;
        const Eigen::Vector2d radial(-side * std::cos(phi), std::sin(phi));  // center -> point
        // Left of travel points toward the center on a left turn, away on a right turn.
        return center + radial * (radius + side * lateral_offset);
    }
    const Eigen::Vector2d exit_start(center.x(), y_turn + radius);
    const Eigen::Vector2d heading(side, 0.0);
    const Eigen::Vector2d left_normal(0.0, side);
    return exit_start + heading * (s - approach_len - arc_len) + left_normal * lateral_offset;
}

GeneratedDataset generate(const GeneratorConfig& cfg) {
    cfg.validate();
    GeneratedDataset out;
    out.trajectories.reserve(cfg.n_trajectories);
    out.truth.reserve(cfg.n_trajectories);

    const auto n_frames = static_cast<std::size_t>(std::floor(cfg.horizon * cfg.rate + 1e-9)) + 1;
    for (std::size_t j = 0; j < cfg.n_trajectories; ++j) {
        const TrajectoryId id = cfg.first_id + static_cast<TrajectoryId>(j);
        Draws draw(mix64(cfg.seed ^ mix64(static_cast<std::uint64_t>(id) + 0x51ed2701ULL)));

        const double u = draw.uniform();
        const int cluster = u < cfg.mix[0] ? kRightTurn : (u < cfg.mix[0] + cfg.mix[1] ? kLeftTurn : kStraight);
        const auto& range = cluster == kStraight ? cfg.speed_range : cfg.turn_speed_range;
        const double speed = draw.uniform(range[0], range[1]);
        const double offset = cfg.lane_offset_std * draw.normal();
        const double clock = cfg.start_spacing * static_cast<double>(j);

        std::vector<double> capture(n_frames);
        for (std::size_t k = 0; k < n_frames; ++k)
            capture[k] = static_cast<double>(k) / cfg.rate + cfg.jitter_std * draw.normal();
        std::sort(capture.begin(), capture.end());

        RawTrajectory traj;
        traj.id = id;
        std::size_t burst_left = 0;
        for (std::size_t k = 0; k < n_frames; ++k) {
            bool dropped = false;
            if (burst_left > 0) {
                --burst_left;
                dropped = true;
            } else if (draw.uniform() < cfg.drop_prob) {
                dropped = true;
                if (cfg.burst_drops) {
                    // Geometric burst length with the configured mean.
                    const double p_stop = 1.0 / cfg.burst_mean_length;
                    while (draw.uniform() >= p_stop) ++burst_left;
                }
            }
            // Noise is drawn for every frame so drops do not shift later draws.
            const double nx = cfg.noise_std * draw.normal();
            const double ny = cfg.noise_std * draw.normal();
            if (dropped) continue;
            const double t = clock + capture[k];
            if (!traj.empty() && t <= traj.times.back()) continue;
            const Eigen::Vector2d p = centerline_point(cfg, cluster, speed * capture[k], offset);
            traj.push_back(t, p.x() + nx, p.y() + ny);
        }
        out.trajectories.push_back(std::move(traj));
        out.truth.push_back(cluster);
    }
    return out;
}

void write_dataset(const GeneratedDataset& data, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create '" + dir.string() + "': " + ec.message());
    save_dataset(dir / "data.csv", data.trajectories);

    const auto truth_path = dir / "truth.csv";
    std::ofstream out(truth_path);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + truth_path.string() + "'");
    out << "trajectory_id,cluster\n";
    for (std::size_t i = 0; i < data.trajectories.size(); ++i)
        out << data.trajectories[i].id << ',' << data.truth[i] << '\n';
    if (!out) throw Error(ErrorKind::Io, "failed writing '" + truth_path.string() + "'");
}

std::map<TrajectoryId, int> load_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open truth file '" + path.string() + "'");
    std::map<TrajectoryId, int> truth;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r" || line_no == 1) continue;
        std::istringstream row(line);
        TrajectoryId id = 0;
        int cluster = 0;
        char comma = 0;
        if (!(row >> id >> comma >> cluster) || comma != ',')
            throw Error(ErrorKind::Parse, "line " + std::to_string(line_no) + ": malformed truth row");
        truth.emplace(id, cluster);
    }
    return truth;
}

}  // namespace isect
